"""Constructive results: volume from a commuting frame, symmetry from an
invariant one-form, Lie-point combinations and a first integral from a pair.

Every routine checks its hypotheses first and records them as named
residuals.  A failed hypothesis produces an outcome with tag
``"hypothesis-failure"`` and no constructed object; it does not raise.
Geometric degeneracies (dependent frames, a vanishing multiplier) do raise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import exprlang as el
from .exprlang import Expr
from .fourier import Grid2
from .geometry import (EPS_INDEP, EPS_VANISH, FiberedSystem, GeometryError, OneForm2, VectorField2,
                       VolumeForm2, dual_coframe, exterior_derivative_oneform, field_sup_norm,
                       independence_margin, interior_volume, lie_bracket, lie_derivative_oneform,
                       lie_derivative_scalar, lie_derivative_volume, oscillation, sup_norm, wedge)

HYPOTHESIS_TOL = 1e-8
CONCLUSION_TOL = 1e-8
VOLUME_DIVERGENCE_TOL = 1e-9
INTEGRAL_TOL = 1e-9
OSCILLATION_TOL = 1e-6
ALPHA_ZERO_TOL = 1e-8
DALPHA_MIN = 1e-4

TAG_CONSTRUCTED = "constructed"
TAG_HYPOTHESIS = "hypothesis-failure"
TAG_CONCLUSION = "conclusion-failure"
TAG_B_T2 = "B on T2"
TAG_B_S1 = "B on S1"
TAG_INCONSISTENT = "inconsistent"


class VanishingError(GeometryError):
    """A multiplier that must be nowhere zero vanishes at a grid node."""

    def __init__(self, name, node, value, fiber_point=()):
        self.name, self.node, self.value, self.fiber_point = name, node, value, tuple(fiber_point)
        super().__init__(f"{name} vanishes near node (x={node[0]:.6g}, y={node[1]:.6g}), "
                         f"|{name}| = {value:.3g}")


@dataclass
class Residual:
    value: float
    tol: float
    comparison: str = "<="   # "<=" for residuals, ">" for margins

    @property
    def ok(self) -> bool:
        return self.value <= self.tol if self.comparison == "<=" else self.value > self.tol

    def to_dict(self) -> dict:
        return {"value": self.value, "tol": self.tol, "comparison": self.comparison, "ok": self.ok}


@dataclass
class ConstructionOutcome:
    kind: str
    produced: Any = None
    hypotheses: dict = field(default_factory=dict)
    conclusions: dict = field(default_factory=dict)
    tag: str = TAG_CONSTRUCTED
    notes: dict = field(default_factory=dict)

    @property
    def hypotheses_ok(self) -> bool:
        return all(r.ok for r in self.hypotheses.values())

    @property
    def conclusions_ok(self) -> bool:
        return all(r.ok for r in self.conclusions.values())

    @property
    def ok(self) -> bool:
        return self.produced is not None and self.hypotheses_ok and self.conclusions_ok

    @property
    def failed(self) -> list[str]:
        return [k for k, r in {**self.hypotheses, **self.conclusions}.items() if not r.ok]

    def to_dict(self) -> dict:
        p = self.produced
        if hasattr(p, "to_dict"):
            p = p.to_dict()
        elif isinstance(p, VolumeForm2):
            p = {"rho": el.to_string(p.rho)}
        elif isinstance(p, Expr):
            p = el.to_string(p)
        return {
            "kind": self.kind,
            "produced": p,
            "hypotheses": {k: r.to_dict() for k, r in self.hypotheses.items()},
            "conclusions": {k: r.to_dict() for k, r in self.conclusions.items()},
            "tag": self.tag,
            "failed": self.failed,
            "notes": self.notes,
        }


def _fibers(sys: FiberedSystem | None, fiber_point) -> list[tuple]:
    if sys is None:
        return [tuple(fiber_point or ())]
    return sys.sample_fibers(fiber_point)


def _finish(out: ConstructionOutcome) -> ConstructionOutcome:
    if not out.conclusions_ok and out.tag == TAG_CONSTRUCTED:
        out.tag = TAG_CONCLUSION
    return out


def _min_abs(e: Expr, grid: Grid2, fibers) -> tuple[float, tuple, tuple]:
    best = (np.inf, (0.0, 0.0), ())
    for fp in fibers:
        v = np.abs(el.sample_values(e, fp, grid))
        i, j = np.unravel_index(int(np.argmin(v)), v.shape)
        if v[i, j] < best[0]:
            best = (float(v[i, j]), (float(grid.nodes[i]), float(grid.nodes[j])), tuple(fp))
    return best


def _require_nonvanishing(name: str, e: Expr, grid: Grid2, fibers, eps=EPS_VANISH) -> float:
    lo, node, fp = _min_abs(e, grid, fibers)
    if lo <= eps:
        raise VanishingError(name, node, lo, fp)
    return lo


def _margin(X, Y, grid, fibers) -> float:
    return min(independence_margin(X, Y, grid, fp) for fp in fibers)


# ------------------------------------------------------------ volume from frame


def volume_from_frame(sys: FiberedSystem, Y: VectorField2, grid: Grid2 | None = None,
                      tol: float = HYPOTHESIS_TOL, fiber_point=None) -> ConstructionOutcome:
    """Invariant volume from a commuting independent pair (X, Y).

    The density is the dx^dy coefficient of alpha_X ^ alpha_Y for the dual
    coframe, with its sign flipped if needed so that it is positive.
    """
    grid = grid or Grid2()
    fibers = _fibers(sys, fiber_point)
    X = sys.X
    out = ConstructionOutcome("volume_from_frame")
    out.hypotheses["B2: [X,Y] = 0"] = Residual(field_sup_norm(lie_bracket(X, Y), grid, fibers), tol)
    b4 = max((sup_norm(lie_derivative_scalar(Y, f), grid, fibers) for f in sys.first_integrals),
             default=0.0)
    out.hypotheses["B4: Y(f) = 0"] = Residual(b4, tol)
    out.hypotheses["independence"] = Residual(_margin(X, Y, grid, fibers), EPS_INDEP, ">")
    if not out.hypotheses_ok:
        out.tag = TAG_HYPOTHESIS
        return out
    ax = ay = None
    for fp in fibers:
        ax, ay = dual_coframe(X, Y, fp, grid)   # raises DependenceError
    rho = wedge(ax, ay)
    signs = [np.sign(el.sample_values(rho, fp, grid)) for fp in fibers]
    if all(np.all(s < 0) for s in signs):
        rho = -rho
        out.notes["orientation"] = "reversed"
    else:
        out.notes["orientation"] = "kept"
    mu = VolumeForm2(rho)
    out.produced = mu
    out.notes["alpha_X"] = ax.to_dict()
    out.notes["alpha_Y"] = ay.to_dict()
    div = max(float(np.max(np.abs(el.sample_values(lie_derivative_volume(X, mu), fp, grid)
                                  / el.sample_values(rho, fp, grid)))) for fp in fibers)
    out.conclusions["divergence"] = Residual(div, VOLUME_DIVERGENCE_TOL)
    lo = min(float(el.sample_values(rho, fp, grid).min()) for fp in fibers)
    out.conclusions["density positive"] = Residual(lo, 0.0, ">")
    return _finish(out)


# ---------------------------------------------------- symmetry from a one-form


def _lie_oneform_residual(X, alpha, grid, fibers) -> float:
    L = lie_derivative_oneform(X, alpha)
    return max([sup_norm(L.ax, grid, fibers), sup_norm(L.ay, grid, fibers)]
               + [sup_norm(a, grid, fibers) for a in L.ac])


def symmetry_from_one_form(sys: FiberedSystem, alpha: OneForm2, mu: VolumeForm2 | None = None,
                           grid: Grid2 | None = None, tol: float = HYPOTHESIS_TOL,
                           fiber_point=None) -> ConstructionOutcome:
    """Solve i_Y mu = dc ^ alpha fiberwise: Y = (A_y/rho) d/dx - (A_x/rho) d/dy."""
    grid = grid or Grid2()
    fibers = _fibers(sys, fiber_point)
    mu = mu or sys.volume or VolumeForm2()
    X = sys.X
    out = ConstructionOutcome("symmetry_from_one_form")
    out.hypotheses["L_X alpha = 0"] = Residual(_lie_oneform_residual(X, alpha, grid, fibers), tol)
    out.hypotheses["L_X mu = 0"] = Residual(sup_norm(lie_derivative_volume(X, mu), grid, fibers), tol)
    out.hypotheses["mu positive"] = Residual(
        min(float(el.sample_values(mu.rho, fp, grid).min()) for fp in fibers), 0.0, ">")
    if not out.hypotheses_ok:
        out.tag = TAG_HYPOTHESIS
        return out
    Y = VectorField2(alpha.ay / mu.rho, -(alpha.ax) / mu.rho)
    out.produced = Y
    out.conclusions["[X,Y] = 0"] = Residual(field_sup_norm(lie_bracket(X, Y), grid, fibers),
                                            CONCLUSION_TOL)
    ci = check_condition_i(sys, alpha, mu, grid, fiber_point)
    out.notes["condition_i"] = ci
    out.notes["independence_margin"] = _margin(X, Y, grid, fibers)
    return _finish(out)


def check_condition_i(sys: FiberedSystem, alpha: OneForm2, mu: VolumeForm2 | None = None,
                      grid: Grid2 | None = None, fiber_point=None, eps: float = EPS_INDEP) -> dict:
    """Is alpha somewhere non-proportional to i_X mu on every sampled fiber?

    Per node the 2x2 determinant A_x B_y - A_y B_x (B = i_X mu) is divided
    by |A||B|; the condition holds on a fiber iff its maximum exceeds eps.
    """
    grid = grid or Grid2()
    mu = mu or sys.volume or VolumeForm2()
    B = interior_volume(sys.X, mu)
    det = alpha.ax * B.ay - alpha.ay * B.ax
    per_fiber = []
    for fp in _fibers(sys, fiber_point):
        d = np.abs(el.sample_values(det, fp, grid))
        na = np.hypot(*alpha.sample(grid, fp))
        nb = np.hypot(*B.sample(grid, fp))
        scale = np.maximum(na * nb, np.finfo(float).tiny)
        r = np.where(na * nb > 0, d / scale, 0.0)
        i, j = np.unravel_index(int(np.argmax(r)), r.shape)
        per_fiber.append({"fiber": list(fp), "max_normalized_det": float(r[i, j]),
                          "node": [float(grid.nodes[i]), float(grid.nodes[j])],
                          "holds": bool(r[i, j] > eps)})
    worst = min(per_fiber, key=lambda p: p["max_normalized_det"])
    return {"verdict": "holds" if all(p["holds"] for p in per_fiber) else "fails",
            "max_normalized_det": worst["max_normalized_det"], "eps": eps, "fibers": per_fiber}


def _local_minima(v: np.ndarray) -> np.ndarray:
    mask = np.ones(v.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                mask &= v <= np.roll(np.roll(v, di, 0), dj, 1)
    return np.argwhere(mask)


def check_condition_ii(sys: FiberedSystem | None, alpha: OneForm2, grid: Grid2 | None = None,
                       fiber_point=None, max_starts: int = 64, newton_iters: int = 40) -> dict:
    """Look for z with alpha_z = 0 and (d alpha)_z != 0.

    Grid local minima of |alpha| seed a least-squares Newton iteration on
    the two components.  Only the sampled set is searched, so a negative
    answer reads "no witness found on sampled set".
    """
    grid = grid or Grid2()
    fa, fb = el.compile_expr(alpha.ax), el.compile_expr(alpha.ay)
    dalpha = exterior_derivative_oneform(alpha)
    fd = el.compile_expr(dalpha)
    jac = [el.compile_expr(el.differentiate(c, v)) for c in (alpha.ax, alpha.ay) for v in ("x", "y")]
    best = None
    for fp in _fibers(sys, fiber_point):
        env = el.fiber_env(fp)

        def ev(f, x, y):
            env["x"], env["y"] = np.asarray(x, float), np.asarray(y, float)
            return np.broadcast_to(f(env), np.shape(x)).astype(float)

        X, Yg = grid.X, grid.Y
        norm = np.hypot(ev(fa, X, Yg), ev(fb, X, Yg))
        starts = _local_minima(norm)
        order = np.argsort(norm[starts[:, 0], starts[:, 1]], kind="stable")[:max_starts]
        for i, j in starts[order]:
            z = np.array([grid.nodes[i], grid.nodes[j]])
            for _ in range(newton_iters):
                F = np.array([ev(fa, z[0], z[1]), ev(fb, z[0], z[1])], dtype=float)
                if np.max(np.abs(F)) <= 1e-15:
                    break
                J = np.array([[ev(jac[0], *z), ev(jac[1], *z)], [ev(jac[2], *z), ev(jac[3], *z)]],
                             dtype=float)
                step = np.linalg.lstsq(J, -F, rcond=None)[0]
                if not np.all(np.isfinite(step)):
                    break
                z = z + step
            an = float(np.hypot(ev(fa, *z), ev(fb, *z)))
            da = float(abs(ev(fd, *z)))
            cand = {"fiber": list(fp), "point": [float(z[0]), float(z[1])],
                    "alpha_norm": an, "dalpha": da}
            if an <= ALPHA_ZERO_TOL and da >= DALPHA_MIN:
                return {"verdict": "holds", "witness": cand,
                        "message": "witness found on sampled set"}
            if best is None or (an <= ALPHA_ZERO_TOL, da) > (best["alpha_norm"] <= ALPHA_ZERO_TOL,
                                                            best["dalpha"]):
                best = cand
    return {"verdict": "fails", "witness": None, "closest": best,
            "message": "no witness found on sampled set"}


# ---------------------------------------------------------- Lie-point symmetry


def _lie_point(case: str, X: VectorField2, Y: VectorField2, g: Expr, h: Expr,
               grid: Grid2 | None, fibers, tol: float) -> ConstructionOutcome:
    grid = grid or Grid2()
    fibers = [tuple(f) for f in fibers]
    g = g if isinstance(g, Expr) else el.Num(float(g))
    h = h if isinstance(h, Expr) else el.Num(float(h))
    out = ConstructionOutcome(f"lie_point_combine_{case}")
    _require_nonvanishing("h", h, grid, fibers)
    br = lie_bracket(X, Y)
    Xh = lie_derivative_scalar(X, h)
    if case == "i":
        out.hypotheses["[X,Y] = gY"] = Residual(field_sup_norm(br - g * Y, grid, fibers), tol)
        out.hypotheses["X(h) = -gh"] = Residual(sup_norm(Xh + g * h, grid, fibers), tol)
    else:
        out.hypotheses["[X,Y] = gX"] = Residual(field_sup_norm(br - g * X, grid, fibers), tol)
        out.hypotheses["X(h) = -g"] = Residual(sup_norm(Xh + g, grid, fibers), tol)
    if not out.hypotheses_ok:
        out.tag = TAG_HYPOTHESIS
        return out
    Z = X + h * Y if case == "i" else h * X + Y
    out.produced = Z
    out.conclusions["[X,Z] = 0"] = Residual(field_sup_norm(lie_bracket(X, Z), grid, fibers),
                                            CONCLUSION_TOL)
    out.conclusions["independence of Z from X"] = Residual(_margin(X, Z, grid, fibers),
                                                           EPS_INDEP, ">")
    return _finish(out)


def lie_point_combine_i(X: VectorField2, Y: VectorField2, g, h, grid: Grid2 | None = None,
                        fibers: Sequence = ((),), tol: float = HYPOTHESIS_TOL) -> ConstructionOutcome:
    """[X,Y] = gY and X(h) = -gh give the symmetry Z = X + hY."""
    return _lie_point("i", X, Y, g, h, grid, fibers, tol)


def lie_point_combine_ii(X: VectorField2, Y: VectorField2, g, h, grid: Grid2 | None = None,
                         fibers: Sequence = ((),), tol: float = HYPOTHESIS_TOL) -> ConstructionOutcome:
    """[X,Y] = gX and X(h) = -g give the symmetry Z = hX + Y."""
    return _lie_point("ii", X, Y, g, h, grid, fibers, tol)


# ------------------------------------------------- first integral from a pair


def fit_lambda(X: VectorField2, Y: VectorField2) -> Expr:
    """Pointwise least-squares multiplier <[X,Y], X> / <X, X>."""
    br = lie_bracket(X, Y)
    return (br.dx * X.dx + br.dy * X.dy) / (X.dx * X.dx + X.dy * X.dy)


def first_integral_from_pair(sys: FiberedSystem, Y: VectorField2, mu: VolumeForm2 | None = None,
                             lam=None, grid: Grid2 | None = None, tol: float = HYPOTHESIS_TOL,
                             fiber_point=None) -> ConstructionOutcome:
    """I = omega(X, Y) = rho (X1 Y2 - X2 Y1) for two mu-preserving fields with [X,Y] = lam X."""
    grid = grid or Grid2()
    fibers = _fibers(sys, fiber_point)
    mu = mu or sys.volume or VolumeForm2()
    X = sys.X
    out = ConstructionOutcome("first_integral_from_pair")
    fitted = lam is None
    lam = fit_lambda(X, Y) if fitted else (lam if isinstance(lam, Expr) else el.Num(float(lam)))
    out.notes["lambda"] = el.to_string(lam)
    out.notes["lambda_fitted"] = fitted
    out.hypotheses["X preserves mu"] = Residual(
        sup_norm(lie_derivative_volume(X, mu), grid, fibers), tol)
    out.hypotheses["Y preserves mu"] = Residual(
        sup_norm(lie_derivative_volume(Y, mu), grid, fibers), tol)
    out.hypotheses["independence"] = Residual(_margin(X, Y, grid, fibers), EPS_INDEP, ">")
    out.hypotheses["[X,Y] = lambda X"] = Residual(
        field_sup_norm(lie_bracket(X, Y) - lam * X, grid, fibers), tol)
    if not out.hypotheses_ok:
        out.tag = TAG_HYPOTHESIS
        return out
    I = mu.rho * (X.dx * Y.dy - X.dy * Y.dx)
    out.produced = I
    out.conclusions["X(I) = 0"] = Residual(sup_norm(lie_derivative_scalar(X, I), grid, fibers),
                                           INTEGRAL_TOL)
    lam_sup = sup_norm(lam, grid, fibers)
    osc = min(oscillation(I, grid, fp) for fp in fibers)
    out.notes["lambda_sup"] = lam_sup
    out.notes["oscillation"] = osc
    if lam_sup <= tol:
        out.tag = TAG_B_T2
    elif osc > OSCILLATION_TOL:
        out.tag = TAG_B_S1
    else:
        out.tag = TAG_INCONSISTENT
    if not out.conclusions_ok:
        out.tag = TAG_CONCLUSION
    return out
