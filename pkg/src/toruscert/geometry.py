"""Fiberwise tensor calculus on U x T^2.

Vector fields are tangent to the fibers, so they carry only the components
along d/dx and d/dy.  All identities are computed symbolically on ``Expr``
components; grids are used only to measure residuals.

Orientation: the reference volume is dc_1 ^ ... ^ dc_m ^ dx ^ dy and
i_X(dx ^ dy) = X1 dy - X2 dx.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang as el
from .exprlang import Expr, differentiate as D
from .fourier import Grid2, SpectralField

EPS_INDEP = 1e-8
EPS_VANISH = 1e-8


class GeometryError(Exception):
    pass


class DependenceError(GeometryError):
    def __init__(self, node, value, fiber_point=()):
        self.node = node
        self.value = value
        self.fiber_point = tuple(fiber_point)
        super().__init__(
            f"fields are dependent at node (x={node[0]:.6g}, y={node[1]:.6g}) "
            f"of fiber {self.fiber_point}: |det| = {value:.3g}")


class PositivityError(GeometryError):
    pass


def _e(v) -> Expr:
    return el.as_expr(v)


@dataclass(frozen=True)
class VectorField2:
    """X = dx * d/dx + dy * d/dy with Expr components."""

    dx: Expr
    dy: Expr

    def __post_init__(self):
        object.__setattr__(self, "dx", _e(self.dx))
        object.__setattr__(self, "dy", _e(self.dy))

    @classmethod
    def parse(cls, dx: str, dy: str, variables=el.DEFAULT_VARIABLES) -> "VectorField2":
        return cls(el.parse(dx, variables), el.parse(dy, variables))

    @property
    def components(self) -> tuple[Expr, Expr]:
        return (self.dx, self.dy)

    def __call__(self, f: Expr) -> Expr:
        return lie_derivative_scalar(self, f)

    def __add__(self, other: "VectorField2") -> "VectorField2":
        return VectorField2(self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: "VectorField2") -> "VectorField2":
        return VectorField2(self.dx - other.dx, self.dy - other.dy)

    def __rmul__(self, f) -> "VectorField2":
        f = _e(f)
        return VectorField2(f * self.dx, f * self.dy)

    def sample(self, grid: Grid2, fiber_point: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        return (el.sample_values(self.dx, fiber_point, grid),
                el.sample_values(self.dy, fiber_point, grid))

    def spectral(self, grid: Grid2, fiber_point: Sequence[float] = ()) -> tuple[SpectralField, SpectralField]:
        a, b = self.sample(grid, fiber_point)
        return SpectralField.from_values(a), SpectralField.from_values(b)

    def __str__(self) -> str:
        return f"({self.dx}) d/dx + ({self.dy}) d/dy"

    def to_dict(self) -> dict:
        return {"dx": str(self.dx), "dy": str(self.dy)}


@dataclass(frozen=True)
class OneForm2:
    """alpha = ax dx + ay dy (+ sum ac_i dc_i)."""

    ax: Expr
    ay: Expr
    ac: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ax", _e(self.ax))
        object.__setattr__(self, "ay", _e(self.ay))
        object.__setattr__(self, "ac", tuple(_e(a) for a in self.ac))

    @classmethod
    def parse(cls, dx: str, dy: str, variables=el.DEFAULT_VARIABLES) -> "OneForm2":
        return cls(el.parse(dx, variables), el.parse(dy, variables))

    def __call__(self, X: VectorField2) -> Expr:
        return self.ax * X.dx + self.ay * X.dy

    def scale(self, f) -> "OneForm2":
        f = _e(f)
        return OneForm2(f * self.ax, f * self.ay, tuple(f * a for a in self.ac))

    def __add__(self, other: "OneForm2") -> "OneForm2":
        m = max(len(self.ac), len(other.ac))
        ac = tuple((self.ac[i] if i < len(self.ac) else el.ZERO)
                   + (other.ac[i] if i < len(other.ac) else el.ZERO) for i in range(m))
        return OneForm2(self.ax + other.ax, self.ay + other.ay, ac)

    def sample(self, grid: Grid2, fiber_point: Sequence[float] = ()):
        return (el.sample_values(self.ax, fiber_point, grid),
                el.sample_values(self.ay, fiber_point, grid))

    def __str__(self) -> str:
        return f"({self.ax}) dx + ({self.ay}) dy"

    def to_dict(self) -> dict:
        return {"dx": str(self.ax), "dy": str(self.ay)}


@dataclass(frozen=True)
class VolumeForm2:
    """mu = rho dc_1 ^ ... ^ dc_m ^ dx ^ dy."""

    rho: Expr = el.ONE

    def __post_init__(self):
        object.__setattr__(self, "rho", _e(self.rho))

    def check_positive(self, grid: Grid2, fiber_point: Sequence[float] = ()) -> float:
        vals = el.sample_values(self.rho, fiber_point, grid)
        lo = float(vals.min())
        if not lo > 0:
            raise PositivityError(f"volume density is not positive on the grid (min {lo:.3g})")
        return lo


@dataclass
class FiberedSystem:
    """X on U x T^2, U a box in R^m, with the projections c_i as first integrals."""

    X: VectorField2
    m: int = 0
    U: tuple = ()
    first_integrals: list = field(default_factory=list)
    volume: VolumeForm2 | None = None
    name: str = ""

    def __post_init__(self):
        if len(self.U) != self.m:
            raise ValueError(f"U has {len(self.U)} intervals but m = {self.m}")
        self.U = tuple((float(lo), float(hi)) for lo, hi in self.U)
        for lo, hi in self.U:
            if not lo <= hi:
                raise ValueError("U intervals must satisfy lo <= hi")
        declared = set(self.variables)
        exprs = [self.X.dx, self.X.dy, *self.first_integrals]
        if self.volume is not None:
            exprs.append(self.volume.rho)
        for e in exprs:
            extra = el.variables_of(e) - declared
            if extra:
                raise ValueError(f"expression {e} uses undeclared variables {sorted(extra)}")

    @property
    def variables(self) -> tuple[str, ...]:
        return el.fiber_variables(self.m)

    @property
    def projections(self) -> list[Expr]:
        return [el.Var(f"c_{i}") for i in range(1, self.m + 1)]

    @property
    def all_first_integrals(self) -> list[Expr]:
        return self.projections + list(self.first_integrals)

    def sample_fibers(self, extra: Sequence[float] | None = None) -> list[tuple[float, ...]]:
        """Corners and centres of U (3^m points), plus an optional user point."""
        axes = [(lo, 0.5 * (lo + hi), hi) for lo, hi in self.U]
        pts = list(dict.fromkeys(tuple(p) for p in itertools.product(*axes))) if axes else [()]
        if extra is not None and tuple(extra) not in pts:
            pts.append(tuple(float(v) for v in extra))
        return pts

    def default_fiber(self) -> tuple[float, ...]:
        return tuple(0.5 * (lo + hi) for lo, hi in self.U)


# -------------------------------------------------------------- grid residuals


def sup_norm(e: Expr, grid: Grid2, fibers: Sequence[Sequence[float]] = ((),)) -> float:
    return max(float(np.max(np.abs(el.sample_values(e, fp, grid)))) for fp in fibers)


def field_sup_norm(X: VectorField2, grid: Grid2, fibers=((),)) -> float:
    return max(sup_norm(X.dx, grid, fibers), sup_norm(X.dy, grid, fibers))


def oscillation(e: Expr, grid: Grid2, fiber_point=()) -> float:
    v = el.sample_values(e, fiber_point, grid)
    return float(v.max() - v.min())


def min_norm(X: VectorField2, grid: Grid2, fiber_point=()) -> float:
    a, b = X.sample(grid, fiber_point)
    return float(np.min(np.hypot(a, b)))


def determinant(X: VectorField2, Y: VectorField2) -> Expr:
    """det(X|Y) = X1 Y2 - X2 Y1."""
    return X.dx * Y.dy - X.dy * Y.dx


def independence_margin(X: VectorField2, Y: VectorField2, grid: Grid2, fiber_point=()) -> float:
    """min over grid nodes of |det(X|Y)|."""
    return float(np.min(np.abs(el.sample_values(determinant(X, Y), fiber_point, grid))))


# ------------------------------------------------------------------ operations


def lie_derivative_scalar(X: VectorField2, f: Expr) -> Expr:
    """X(f) = X1 df/dx + X2 df/dy."""
    f = _e(f)
    return X.dx * D(f, "x") + X.dy * D(f, "y")


def lie_bracket(X: VectorField2, Y: VectorField2) -> VectorField2:
    """[X, Y]^i = X(Y^i) - Y(X^i)."""
    return VectorField2(lie_derivative_scalar(X, Y.dx) - lie_derivative_scalar(Y, X.dx),
                        lie_derivative_scalar(X, Y.dy) - lie_derivative_scalar(Y, X.dy))


def exterior_derivative_oneform(alpha: OneForm2) -> Expr:
    """Density of d(alpha) against dx ^ dy: d/dx ay - d/dy ax."""
    return D(alpha.ay, "x") - D(alpha.ax, "y")


def exterior_derivative_scalar(f: Expr) -> OneForm2:
    return OneForm2(D(f, "x"), D(f, "y"))


def interior_volume(X: VectorField2, mu: VolumeForm2) -> OneForm2:
    """Fiber part of i_X mu: rho (X1 dy - X2 dx)."""
    return OneForm2(-(mu.rho * X.dy), mu.rho * X.dx)


def interior_twoform(X: VectorField2, density: Expr) -> OneForm2:
    """i_X (density dx ^ dy)."""
    return interior_volume(X, VolumeForm2(density))


def lie_derivative_oneform(X: VectorField2, alpha: OneForm2) -> OneForm2:
    """L_X alpha assembled with Cartan's formula i_X d(alpha) + d(i_X alpha).

    Components along dc_i, when present, use the coordinate formula
    X(alpha_c) + alpha_x dX1/dc + alpha_y dX2/dc (X has no c-components).
    """
    s = alpha(X)
    fiber = interior_twoform(X, exterior_derivative_oneform(alpha)) + exterior_derivative_scalar(s)
    ac = tuple(
        lie_derivative_scalar(X, a) + alpha.ax * D(X.dx, f"c_{i}") + alpha.ay * D(X.dy, f"c_{i}")
        for i, a in enumerate(alpha.ac, start=1))
    return OneForm2(fiber.ax, fiber.ay, ac)


def lie_derivative_oneform_coordinates(X: VectorField2, alpha: OneForm2) -> OneForm2:
    """(L_X alpha)_i = X(alpha_i) + alpha_j d_i X^j, for cross-checking Cartan."""
    comps = []
    for v in ("x", "y"):
        a_i = alpha.ax if v == "x" else alpha.ay
        comps.append(lie_derivative_scalar(X, a_i) + alpha.ax * D(X.dx, v) + alpha.ay * D(X.dy, v))
    return OneForm2(*comps)


def divergence(X: VectorField2, mu: VolumeForm2, grid: Grid2 | None = None,
               fiber_point: Sequence[float] = ()) -> Expr:
    """(d/dx(rho X1) + d/dy(rho X2)) / rho; zero iff X preserves mu.

    When ``grid`` is given, positivity of rho is checked there first.
    """
    if grid is not None:
        mu.check_positive(grid, fiber_point)
    rho = mu.rho
    return (D(rho * X.dx, "x") + D(rho * X.dy, "y")) / rho


def lie_derivative_volume(X: VectorField2, mu: VolumeForm2) -> Expr:
    """Density of L_X mu against the reference volume: d/dx(rho X1) + d/dy(rho X2)."""
    return D(mu.rho * X.dx, "x") + D(mu.rho * X.dy, "y")


def wedge(alpha: OneForm2, beta: OneForm2) -> Expr:
    """Density of alpha ^ beta against dx ^ dy."""
    return alpha.ax * beta.ay - alpha.ay * beta.ax


def dual_coframe(X: VectorField2, Y: VectorField2, fiber_point: Sequence[float] = (),
                 grid: Grid2 | None = None, eps: float = EPS_INDEP) -> tuple[OneForm2, OneForm2]:
    """One-forms with alpha_X(X) = 1, alpha_X(Y) = 0, alpha_Y(X) = 0, alpha_Y(Y) = 1.

    Raises DependenceError at the first grid node where |det(X|Y)| <= eps.
    """
    grid = grid or Grid2()
    det = determinant(X, Y)
    vals = el.sample_values(det, fiber_point, grid)
    bad = np.abs(vals) <= eps
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DependenceError((grid.nodes[i], grid.nodes[j]), float(abs(vals[i, j])), fiber_point)
    alpha_x = OneForm2(Y.dy / det, -(Y.dx) / det)
    alpha_y = OneForm2(-(X.dy) / det, X.dx / det)
    return alpha_x, alpha_y
