"""Hypothesis checks for the Bogoyavlensky and Euler-Jacobi theorems and the
classification pipeline B-on-T2 > B-on-S1 > EJ-only-within-truncation.

A verdict always carries the residual it was decided on and the tolerance.
Nothing here claims nonexistence: an empty search is reported relative to
the truncation band.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang as el
from . import flow, search
from .fourier import Grid2, SpectralField, spectral_derivative
from .geometry import (EPS_INDEP, EPS_VANISH, FiberedSystem, PositivityError, VectorField2, VolumeForm2,
                       field_sup_norm, independence_margin, lie_bracket, lie_derivative_scalar,
                       lie_derivative_volume, min_norm, oscillation, sup_norm)

DEFAULT_TOL = 1e-8
OSCILLATION_TOL = 1e-6

TAG_T2 = "B-on-T2"
TAG_S1 = "B-on-S1"
TAG_EJ = "EJ-only-within-truncation"
TAG_INCONCLUSIVE = "inconclusive"
TAG_RANK = {TAG_T2: 3, TAG_S1: 2, TAG_EJ: 1, TAG_INCONCLUSIVE: 0}


@dataclass
class Verdict:
    residual: float
    tol: float
    comparison: str = "<="
    detail: str = ""

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.residual):
            return False
        return self.residual <= self.tol if self.comparison == "<=" else self.residual > self.tol

    def to_dict(self) -> dict:
        return {"residual": float(self.residual), "tol": float(self.tol), "comparison": self.comparison,
                "passed": self.passed, "detail": self.detail}


SAMPLING_NOTE = ("positivity and independence are checked at grid nodes and sampled fibers only; "
                 "values between nodes are not certified")


@dataclass
class Certificate:
    system: str
    kind: str                       # "EJ" or "B"
    claims: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    fibers: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {"system": self.system, "kind": self.kind, "passed": self.passed,
                "claims": self.claims, "fibers": [list(f) for f in self.fibers],
                "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
                "note": SAMPLING_NOTE}


@dataclass
class Classification:
    tag: str
    per_fiber: list = field(default_factory=list)
    evidence: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    results: list | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"tag": self.tag, "per_fiber": self.per_fiber, "flags": list(self.flags),
                "evidence": self.evidence}


# ---------------------------------------------------------------- check_ej


def _first_integral_residual(V: VectorField2, sys: FiberedSystem, grid, fibers) -> float:
    # the projections c_i are annihilated structurally (V has no c-components)
    return max((sup_norm(lie_derivative_scalar(V, f), grid, fibers) for f in sys.first_integrals),
               default=0.0)


def _spectral_divergence(X: VectorField2, rho: SpectralField, grid: Grid2, fp) -> tuple[float, float]:
    """sup |div_rho X| for a density given by grid samples, and min rho."""
    rv = rho.resample(grid.N).values() if rho.N != grid.N else rho.values()
    x1, x2 = X.sample(grid, fp)
    d = (spectral_derivative(SpectralField.from_values(rv * x1), "x").values()
         + spectral_derivative(SpectralField.from_values(rv * x2), "y").values())
    lo = float(rv.min())
    return (float(np.max(np.abs(d / rv))) if lo > 0 else np.inf), lo


def check_ej(sys: FiberedSystem, mu: VolumeForm2 | SpectralField | None = None,
             grid: Grid2 | None = None, tol: float = DEFAULT_TOL, fiber_point=None) -> Certificate:
    """Euler-Jacobi hypotheses (EJ1 plus an invariant mu) on the sampled fibers.

    ``mu`` is a symbolic volume, or a density sampled on the torus (valid for
    a single fiber); it defaults to the system's declared volume, then dx^dy.
    """
    grid = grid or Grid2()
    fibers = sys.sample_fibers(fiber_point)
    mu = mu if mu is not None else (sys.volume or VolumeForm2())
    cert = Certificate(sys.name, "EJ", fibers=fibers)
    cert.claims["first_integrals"] = [el.to_string(f) for f in sys.all_first_integrals]
    X = sys.X
    cert.verdicts["EJ1"] = Verdict(_first_integral_residual(X, sys, grid, fibers), tol,
                                   detail="max sup |X(f)| over declared first integrals")
    if isinstance(mu, SpectralField):
        cert.claims["volume_density"] = "grid density"
        divs, los = zip(*(_spectral_divergence(X, mu, grid, fp) for fp in fibers))
        div, lo = max(divs), min(los)
    else:
        cert.claims["volume_density"] = el.to_string(mu.rho)
        lo = min(float(el.sample_values(mu.rho, fp, grid).min()) for fp in fibers)
        if lo > 0:
            div = max(float(np.max(np.abs(el.sample_values(lie_derivative_volume(X, mu), fp, grid)
                                          / el.sample_values(mu.rho, fp, grid)))) for fp in fibers)
        else:
            div = np.inf
    cert.verdicts["volume positive"] = Verdict(lo, 0.0, ">", "min density on grid")
    cert.verdicts["L_X mu = 0"] = Verdict(div, tol, detail="sup |div_mu X| on grid")
    cert.verdicts["never-vanishing"] = Verdict(min(min_norm(X, grid, fp) for fp in fibers),
                                               EPS_VANISH, ">", "min |X| on grid")
    return cert


# ----------------------------------------------------------------- check_b


def check_b(sys: FiberedSystem, Ys: Sequence[VectorField2] = (), grid: Grid2 | None = None,
            tol: float = DEFAULT_TOL, fiber_point=None) -> Certificate:
    """B1-B4 and independence for k = 1 + len(Ys) in {1, 2}.

    With k = 1 the torus directions carry one extra first integral; it must
    be declared and nonconstant on the fibers.
    """
    Ys = list(Ys)
    k = 1 + len(Ys)
    if k > 2:
        raise ValueError(f"k = {k}: only tori of dimension <= 2 are in scope")
    grid = grid or Grid2()
    fibers = sys.sample_fibers(fiber_point)
    X = sys.X
    cert = Certificate(sys.name, "B", fibers=fibers)
    cert.claims["k"] = k
    cert.claims["first_integrals"] = [el.to_string(f) for f in sys.all_first_integrals]
    cert.claims["symmetries"] = [Y.to_dict() for Y in Ys]
    cert.verdicts["B1"] = Verdict(_first_integral_residual(X, sys, grid, fibers), tol,
                                  detail="max sup |X(f)|")
    cert.verdicts["B2"] = Verdict(max((field_sup_norm(lie_bracket(Y, X), grid, fibers) for Y in Ys),
                                      default=0.0), tol, detail="max sup |[Y_i, X]|")
    b3 = max((field_sup_norm(lie_bracket(Ys[i], Ys[j]), grid, fibers)
              for i in range(len(Ys)) for j in range(i + 1, len(Ys))), default=0.0)
    cert.verdicts["B3"] = Verdict(b3, tol, detail="vacuous for k <= 2" if len(Ys) < 2 else "")
    cert.verdicts["B4"] = Verdict(max((_first_integral_residual(Y, sys, grid, fibers) for Y in Ys),
                                      default=0.0), tol, detail="max sup |Y_i(f)|")
    cert.verdicts["never-vanishing"] = Verdict(min(min_norm(X, grid, fp) for fp in fibers),
                                               EPS_VANISH, ">", "min |X| on grid")
    if k == 2:
        margin = min(independence_margin(X, Ys[0], grid, fp) for fp in fibers)
        cert.verdicts["independence"] = Verdict(margin, EPS_INDEP, ">", "min |det(X|Y)| on grid")
    else:
        osc = max((min(oscillation(f, grid, fp) for fp in fibers) for f in sys.first_integrals),
                  default=0.0)
        cert.verdicts["nontrivial first integral"] = Verdict(
            osc, OSCILLATION_TOL, ">", "oscillation of the best declared integral on the fibers")
    return cert


# ---------------------------------------------------------------- classify


@dataclass
class ClassifyOptions:
    grid: Grid2 = field(default_factory=Grid2)
    band: int | None = None
    threshold: float = search.DEFAULT_THRESHOLD
    tol: float = DEFAULT_TOL
    horizon: float = flow.DEFAULT_ROTATION_HORIZON
    seeds: int = 1
    n_returns: int = flow.DEFAULT_RETURNS
    section_seeds: int = flow.DEFAULT_SECTION_SEEDS
    validation_horizon: float = search.DEFAULT_VALIDATION_HORIZON


def _fiber_tag(sym, fi, ej_ok) -> str:
    if sym.found:
        return TAG_T2
    if fi.found:
        return TAG_S1
    if ej_ok:
        return TAG_EJ
    return TAG_INCONCLUSIVE


def classify_fiber(sys: FiberedSystem, fp: tuple, opts: ClassifyOptions) -> dict:
    X, grid = sys.X, opts.grid
    dens = search.find_invariant_density(X, fp, grid, opts.band, opts.threshold)
    ej = None
    density_cand = next((c for c in dens.candidates if c.verified and c.notes.get("positive")), None)
    if density_cand is not None:
        rho = density_cand.fields[0].scale(1.0 / density_cand.notes["mean"])
        ej = check_ej(_single_fiber(sys, fp), rho, grid, opts.tol)
    declared_ej = check_ej(_single_fiber(sys, fp), None, grid, opts.tol) if sys.volume else None
    ej_ok = (ej is not None and ej.passed) or (declared_ej is not None and declared_ej.passed)
    fi = search.find_first_integrals(X, fp, grid, opts.band, opts.threshold,
                                     horizon=opts.validation_horizon)
    sym = search.find_symmetries(X, fp, grid, opts.band, opts.threshold)
    sections, tests = {}, {}
    for axis in ("y", "x"):
        key = f"{axis}=0"
        try:
            sd = flow.poincare_section(X, fp, 0.0, opts.n_returns, axis, opts.section_seeds)
            sections[key] = sd.summary()
            tests[key] = flow.constant_return_time_test(sd)
        except flow.NonTransversalError as exc:
            sections[key] = {"axis": axis, "level": 0.0, "error": f"not transversal: {exc}"}
        except flow.IntegrationError as exc:
            sections[key] = {"axis": axis, "level": 0.0, "error": str(exc)}
    rot = flow.rotation_vector(X, fp, flow.seed_points(opts.seeds), opts.horizon)
    tag = _fiber_tag(sym, fi, ej_ok)
    flags = []
    if tag == TAG_T2 and not any(t["constant"] for t in tests.values()):
        flags.append("cross-consistency: no constant-return-time section among y=0, x=0")
    if tag == TAG_EJ:
        flags.append(f"within truncation band K={dens.band}")
    return {
        "fiber": list(fp),
        "tag": tag,
        "flags": flags,
        "density": dens,
        "ej": ej,
        "declared_ej": declared_ej,
        "first_integrals": fi,
        "symmetries": sym,
        "sections": sections,
        "section_tests": tests,
        "rotation": rot,
    }


def _single_fiber(sys: FiberedSystem, fp) -> FiberedSystem:
    U = tuple((v, v) for v in fp)
    return FiberedSystem(sys.X, sys.m, U, list(sys.first_integrals), sys.volume, sys.name)


def classify(sys: FiberedSystem, opts: ClassifyOptions | None = None, fiber_point=None,
             keep_results: bool = False) -> Classification:
    """Run the search and flow pipeline on every sampled fiber; the system
    tag is the weakest fiber tag."""
    opts = opts or ClassifyOptions()
    results = [classify_fiber(sys, tuple(fp), opts) for fp in sys.sample_fibers(fiber_point)]
    tag = min((r["tag"] for r in results), key=TAG_RANK.__getitem__)
    flags = sorted({f for r in results for f in r["flags"]})
    per_fiber = [{"fiber": r["fiber"], "tag": r["tag"]} for r in results]
    evidence = {
        "kernel_reports": [{"fiber": r["fiber"],
                            "density": r["density"].to_dict(),
                            "first_integral": r["first_integrals"].to_dict(),
                            "symmetry": r["symmetries"].to_dict()} for r in results],
        "hypotheses": [{"fiber": r["fiber"],
                        "ej_found_density": r["ej"].to_dict() if r["ej"] else None,
                        "ej_declared_volume": r["declared_ej"].to_dict() if r["declared_ej"] else None}
                       for r in results],
        "sections": [{"fiber": r["fiber"], "sections": r["sections"], "tests": r["section_tests"]}
                     for r in results],
        "rotation": [{"fiber": r["fiber"], "estimates": [e.to_dict() for e in r["rotation"]]}
                     for r in results],
        "options": {"grid": opts.grid.N, "band": opts.band if opts.band is not None else opts.grid.N // 4,
                    "threshold": opts.threshold, "tol": opts.tol, "horizon": opts.horizon,
                    "seeds": opts.seeds},
    }
    return Classification(tag, per_fiber, evidence, flags, results if keep_results else None)
