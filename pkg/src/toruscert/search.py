"""Galerkin searches for tensor invariants of a vector field on T^2.

Every search works at one fiber point.  Unknown fields are trigonometric
polynomials of degree <= K (the solution band); the defining linear
equation is imposed on all modes up to min(N/2 - 1, K + deg X), so for
band-limited X the truncated operator is exact on the trial space.
Operators are written in the real orthonormal basis {1, sqrt2 cos, sqrt2 sin}
so kernel vectors are real fields directly.

Searches report kernels and singular-value tails; an empty result only
means nothing was found within the band.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang as el
from .fourier import (
    DEFAULT_THRESHOLD, Grid2, KernelReport, SpectralField, band_modes, field_from_params,
    kernel_basis, multiplication_matrix, params_from_field, realify, spectral_derivative,
)
from .geometry import EPS_INDEP, EPS_VANISH, VectorField2, min_norm

DEFAULT_VALIDATION_HORIZON = 100.0
DEFAULT_VALIDATION_TRAJECTORIES = 10
DRIFT_TOL = 1e-5
ENDPOINT_DRIFT_TOL = 1e-6
SYMMETRY_VERIFY_TOL = 1e-6


class SearchError(Exception):
    pass


@dataclass
class Candidate:
    params: np.ndarray           # real coefficient parameters (one block per component)
    fields: tuple                # SpectralField per component
    residual: float              # sup-norm of the defining equation on the data grid
    verified: bool = True
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"residual": float(self.residual), "verified": bool(self.verified)}
        d.update({k: _jsonable(v) for k, v in self.notes.items()})
        return d


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    return v


@dataclass
class SearchResult:
    kind: str  # 'density' | 'first_integral' | 'symmetry' | 'one_form'
    candidates: list
    kernel_report: KernelReport
    tolerance: float
    fiber_point: tuple = ()
    band: int = 16
    grid_N: int = 64
    notes: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        """Whether a usable object was found (see ``notes['found_reason']``)."""
        return bool(self.notes.get("found", False))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fiber_point": list(self.fiber_point),
            "band": self.band,
            "grid": self.grid_N,
            "function_class": f"trigonometric polynomials of degree <= {self.band}",
            "found": self.found,
            "tolerance": float(self.tolerance),
            "kernel": self.kernel_report.to_dict(),
            "candidates": [c.to_dict() for c in self.candidates],
            "notes": {k: _jsonable(v) for k, v in self.notes.items()},
        }


# ------------------------------------------------------------------ assembly


@dataclass
class _Setup:
    X: VectorField2
    fiber_point: tuple
    grid: Grid2
    K: int
    R: int
    X1: SpectralField
    X2: SpectralField
    cols: np.ndarray
    rows: np.ndarray


def _setup(X: VectorField2, fiber_point, grid, band) -> _Setup:
    grid = grid or Grid2()
    fiber_point = tuple(fiber_point)
    K = grid.N // 4 if band is None else int(band)
    if not 0 < K < grid.N // 2:
        raise SearchError(f"band {K} incompatible with grid {grid.N}")
    if min_norm(X, grid, fiber_point) <= EPS_VANISH:
        raise SearchError("X vanishes on the fiber grid")
    X1, X2 = X.spectral(grid, fiber_point)
    deg = max(X1.degree(), X2.degree())
    R = min(grid.N // 2 - 1, K + deg)
    return _Setup(X, fiber_point, grid, K, R, X1, X2, band_modes(K), band_modes(R))


def _advection(s: _Setup) -> np.ndarray:
    c = s.cols
    return (multiplication_matrix(s.X1, s.rows, c) * (1j * c[:, 0])[None, :]
            + multiplication_matrix(s.X2, s.rows, c) * (1j * c[:, 1])[None, :])


def _real(A: np.ndarray, s: _Setup) -> np.ndarray:
    return realify(A, s.K, s.R)


def density_operator(s: _Setup) -> np.ndarray:
    """rho -> d/dx(X1 rho) + d/dy(X2 rho), real form."""
    r = s.rows
    A = ((1j * r[:, 0])[:, None] * multiplication_matrix(s.X1, r, s.cols)
         + (1j * r[:, 1])[:, None] * multiplication_matrix(s.X2, r, s.cols))
    return _real(A, s)


def advection_operator(s: _Setup) -> np.ndarray:
    """f -> X(f), real form."""
    return _real(_advection(s), s)


def symmetry_operator(s: _Setup) -> np.ndarray:
    """(a, b) -> [X, a d/dx + b d/dy], real form, block columns (a | b)."""
    A = _advection(s)
    dX = {(i, v): spectral_derivative(F, v) for i, F in ((1, s.X1), (2, s.X2)) for v in ("x", "y")}
    M = lambda F: multiplication_matrix(F, s.rows, s.cols)  # noqa: E731
    blocks = [[A - M(dX[1, "x"]), -M(dX[1, "y"])],
              [-M(dX[2, "x"]), A - M(dX[2, "y"])]]
    return np.block([[_real(b, s) for b in row] for row in blocks])


def one_form_operator(s: _Setup) -> np.ndarray:
    """(ax, ay) -> L_X(ax dx + ay dy), real form."""
    A = _advection(s)
    dX = {(i, v): spectral_derivative(F, v) for i, F in ((1, s.X1), (2, s.X2)) for v in ("x", "y")}
    M = lambda F: multiplication_matrix(F, s.rows, s.cols)  # noqa: E731
    blocks = [[A + M(dX[1, "x"]), M(dX[2, "x"])],
              [M(dX[1, "y"]), A + M(dX[2, "y"])]]
    return np.block([[_real(b, s) for b in row] for row in blocks])


def _rotate(V: np.ndarray, target: np.ndarray | None) -> tuple[np.ndarray, float]:
    """Orthonormal basis of span(V) whose first vector is the projection of ``target``."""
    if V.shape[1] == 0 or target is None:
        return V, 0.0
    t = V.T @ target
    tn = float(np.linalg.norm(t))
    if tn <= 1e-8 * float(np.linalg.norm(target)):
        return V, tn / max(float(np.linalg.norm(target)), 1e-300)
    first = V @ (t / tn)
    rest = V - np.outer(first, first @ V)
    U, sv, _ = np.linalg.svd(rest, full_matrices=False)
    out = np.column_stack([first, U[:, : V.shape[1] - 1]])
    return out, tn / float(np.linalg.norm(target))


def _grid_derivatives(f: SpectralField):
    return (spectral_derivative(f, "x").values(), spectral_derivative(f, "y").values())


# ------------------------------------------------------------------- searches


def find_invariant_density(X: VectorField2, fiber_point: Sequence[float] = (), grid: Grid2 | None = None,
                           band: int | None = None, threshold: float = DEFAULT_THRESHOLD) -> SearchResult:
    """Kernel of rho -> div(rho X) on the band; candidates normalised to mean 1."""
    s = _setup(X, fiber_point, grid, band)
    A = density_operator(s)
    kr = kernel_basis(A, "none", threshold)
    e0 = np.zeros(A.shape[1])
    e0[0] = 1.0
    V, _ = _rotate(kr.basis, e0)
    x1, x2 = s.X1.values(), s.X2.values()
    tol = _residual_tol(kr, A)
    cands = []
    for v in V.T:
        f = field_from_params(v, s.K, s.grid.N)
        mean = float(v[0])
        vals = f.values()
        res = _sup(spectral_derivative(SpectralField.from_values(vals * x1), "x").values()
                   + spectral_derivative(SpectralField.from_values(vals * x2), "y").values())
        notes = {"mean": mean}
        if abs(mean) > 1e-8:
            dens = vals / mean
            notes["min_normalized"] = float(dens.min())
            notes["positive"] = bool(dens.min() > 0)
        else:
            notes["positive"] = False
            notes["flag"] = "mean-zero kernel element; not a density"
        cands.append(Candidate(v, (f,), res, verified=res <= tol, notes=notes))
    found = any(c.notes["positive"] and c.verified for c in cands)
    return SearchResult("density", cands, kr, tol, s.fiber_point, s.K, s.grid.N,
                        notes={"found": found})


def normalized_density(result: SearchResult, index: int = 0) -> np.ndarray:
    """Grid values of candidate ``index`` scaled to mean 1."""
    c = result.candidates[index]
    return c.fields[0].values() / c.notes["mean"]


def find_first_integrals(X: VectorField2, fiber_point: Sequence[float] = (), grid: Grid2 | None = None,
                         band: int | None = None, threshold: float = DEFAULT_THRESHOLD,
                         validate: bool = True, horizon: float = DEFAULT_VALIDATION_HORIZON,
                         n_trajectories: int = DEFAULT_VALIDATION_TRAJECTORIES,
                         integrator_tol: float = 1e-10) -> SearchResult:
    """Mean-zero kernel of f -> X(f); each candidate checked for drift along trajectories."""
    s = _setup(X, fiber_point, grid, band)
    A = advection_operator(s)
    kr = kernel_basis(A, "mean-zero", threshold, zero_index=0)
    x1, x2 = s.X1.values(), s.X2.values()
    tol = _residual_tol(kr, A)
    cands = []
    for v in kr.basis.T:
        f = field_from_params(v, s.K, s.grid.N)
        fx, fy = _grid_derivatives(f)
        res = _sup(x1 * fx + x2 * fy)
        cands.append(Candidate(v, (f,), res, verified=res <= tol,
                               notes={"oscillation": float(np.ptp(f.values()))}))
    if validate and cands:
        from .flow import integrate, seed_points

        ts = np.linspace(0.0, horizon, 401)
        pts = np.stack([integrate(X, s.fiber_point, z0, horizon, tol=integrator_tol).at(ts)
                        for z0 in seed_points(n_trajectories)], axis=1)  # (len(ts), n, 2)
        for c in cands:
            vals = c.fields[0].evaluate(pts[..., 0], pts[..., 1])
            drift = float(np.max(np.abs(vals - vals[0][None, :])))
            end = float(np.max(np.abs(vals[-1] - vals[0])))
            osc = max(c.notes["oscillation"], 1e-12)
            rel, rel_end = drift / osc, end / osc
            c.notes["trajectory_drift"] = rel
            c.notes["endpoint_drift"] = rel_end
            c.verified = c.verified and rel <= DRIFT_TOL and rel_end <= ENDPOINT_DRIFT_TOL
    found = any(c.verified for c in cands)
    return SearchResult("first_integral", cands, kr, tol, s.fiber_point, s.K, s.grid.N,
                        notes={"found": found, "validated_by_trajectories": bool(validate)})


def find_symmetries(X: VectorField2, fiber_point: Sequence[float] = (), grid: Grid2 | None = None,
                    band: int | None = None, threshold: float = DEFAULT_THRESHOLD,
                    eps_indep: float = EPS_INDEP) -> SearchResult:
    """Kernel of (a, b) -> [X, a d/dx + b d/dy].

    The first candidate is the projection of X itself onto the kernel; the
    others span its orthogonal complement and carry an independence verdict
    min |det(X|Y)| > eps_indep.  Brackets are re-verified on a 2N grid.
    """
    s = _setup(X, fiber_point, grid, band)
    A = symmetry_operator(s)
    kr = kernel_basis(A, "none", threshold)
    nr = A.shape[1] // 2
    x_params = np.concatenate([params_from_field(s.X1, s.K), params_from_field(s.X2, s.K)])
    V, x_overlap = _rotate(kr.basis, x_params)
    x1, x2 = s.X1.values(), s.X2.values()
    tol = _residual_tol(kr, A)

    fine = s.grid.refined(2)
    env = el.fiber_env(s.fiber_point)
    env["x"], env["y"] = fine.X, fine.Y
    Xf = [np.broadcast_to(el.evaluate(c, env), fine.shape) for c in X.components]
    dXf = {(i, v): np.broadcast_to(el.evaluate(el.differentiate(c, v), env), fine.shape)
           for i, c in enumerate(X.components) for v in ("x", "y")}
    xsup = max(np.abs(Xf[0]).max(), np.abs(Xf[1]).max())

    cands = []
    for idx, v in enumerate(V.T):
        a = field_from_params(v[:nr], s.K, s.grid.N)
        b = field_from_params(v[nr:], s.K, s.grid.N)
        av, bv = a.values(), b.values()
        ax, ay = _grid_derivatives(a)
        bx, by = _grid_derivatives(b)
        r1 = x1 * ax + x2 * ay - (av * _v(spectral_derivative(s.X1, "x")) + bv * _v(spectral_derivative(s.X1, "y")))
        r2 = x1 * bx + x2 * by - (av * _v(spectral_derivative(s.X2, "x")) + bv * _v(spectral_derivative(s.X2, "y")))
        res = max(_sup(r1), _sup(r2))
        # verification on the refined grid
        af, bf = a.resample(fine.N), b.resample(fine.N)
        afx, afy = _grid_derivatives(af)
        bfx, bfy = _grid_derivatives(bf)
        afv, bfv = af.values(), bf.values()
        br1 = Xf[0] * afx + Xf[1] * afy - (afv * dXf[0, "x"] + bfv * dXf[0, "y"])
        br2 = Xf[0] * bfx + Xf[1] * bfy - (afv * dXf[1, "x"] + bfv * dXf[1, "y"])
        ysup = max(np.abs(afv).max(), np.abs(bfv).max())
        bracket = max(_sup(br1), _sup(br2))
        bracket_ok = bracket <= SYMMETRY_VERIFY_TOL * xsup * max(ysup, 1e-300)
        margin = float(np.min(np.abs(x1 * bv - x2 * av)))
        notes = {
            "bracket_fine_grid": bracket,
            "independence_margin": margin,
            "independent": bool(margin > eps_indep),
            "role": "X" if idx == 0 and x_overlap > 1 - 1e-6 else "candidate",
        }
        cands.append(Candidate(v, (a, b), res, verified=res <= tol and bracket_ok, notes=notes))
    found = any(c.verified and c.notes["independent"] for c in cands)
    return SearchResult("symmetry", cands, kr, tol, s.fiber_point, s.K, s.grid.N,
                        notes={"found": found, "x_in_kernel_overlap": x_overlap,
                               "independence": "min over grid nodes of |det(X|Y)|",
                               "grid_caveat": "independence certified at grid nodes only"})


def find_invariant_one_forms(X: VectorField2, fiber_point: Sequence[float] = (), grid: Grid2 | None = None,
                             band: int | None = None, threshold: float = DEFAULT_THRESHOLD) -> SearchResult:
    """Kernel of (ax, ay) -> L_X(ax dx + ay dy)."""
    s = _setup(X, fiber_point, grid, band)
    A = one_form_operator(s)
    kr = kernel_basis(A, "none", threshold)
    nr = A.shape[1] // 2
    tol = _residual_tol(kr, A)
    cands = []
    for v, r in zip(kr.basis.T, kr.residuals):
        a = field_from_params(v[:nr], s.K, s.grid.N)
        b = field_from_params(v[nr:], s.K, s.grid.N)
        cands.append(Candidate(v, (a, b), float(r), verified=True))
    return SearchResult("one_form", cands, kr, tol, s.fiber_point, s.K, s.grid.N,
                        notes={"found": bool(cands)})


# ------------------------------------------------------------------- helpers


def _v(f: SpectralField) -> np.ndarray:
    return f.values()


def _sup(a: np.ndarray) -> float:
    return float(np.max(np.abs(a)))


def _residual_tol(kr: KernelReport, A: np.ndarray) -> float:
    """Grid sup-norm bound implied by ||A v|| <= threshold * sigma_max for unit v."""
    return max(kr.threshold * kr.sigma_max * np.sqrt(A.shape[0]), 1e-12)


def span_alignment(result: SearchResult, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Best |correlation| between mean-zero grid values ``target`` and the span of
    single-component candidates, with the aligned combination's grid values."""
    if not result.candidates:
        return 0.0, np.zeros_like(target)
    vals = np.stack([c.fields[0].values().ravel() for c in result.candidates], axis=1)
    vals = vals - vals.mean(axis=0, keepdims=True)
    t = target.ravel() - target.mean()
    Q, _ = np.linalg.qr(vals)
    proj = Q @ (Q.T @ t)
    corr = float(np.linalg.norm(proj) / np.linalg.norm(t))
    return corr, proj.reshape(target.shape)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
