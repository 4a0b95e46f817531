"""Trajectories on T^2 and the dynamical observables built from them.

States live in the universal cover (lifted, never reduced mod 2pi); the
reduction happens only when evaluating periodic observables or exporting.
Several initial conditions can be integrated together as one batch sharing
a step-size sequence; the local error test applies to every member.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprlang as el
from .fourier import Grid2, SpectralField
from .geometry import VectorField2

TWO_PI = 2 * np.pi
DEFAULT_TOL = 1e-10
DEFAULT_ROTATION_HORIZON = 1000.0
DEFAULT_RETURNS = 64
DEFAULT_SECTION_SEEDS = 8
EPS_TRANSVERSAL = 1e-8

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class IntegrationError(RuntimeError):
    def __init__(self, message, t=None, state=None):
        self.t = t
        self.state = state
        super().__init__(message)


class NonTransversalError(ValueError):
    pass


def vector_field_function(X: VectorField2, fiber_point: Sequence[float] = ()) -> Callable:
    """f(z) for z of shape (B, 2) returning velocities of the same shape."""
    env = el.fiber_env(fiber_point)
    env["x"] = env["y"] = 0.0
    fx, fy = el.compile_expr(X.dx).raw, el.compile_expr(X.dy).raw

    def rhs(z: np.ndarray) -> np.ndarray:
        env["x"], env["y"] = z[:, 0], z[:, 1]
        out = np.empty_like(z)
        out[:, 0] = fx(env)
        out[:, 1] = fy(env)
        return out

    return rhs


@dataclass
class Trajectory:
    times: np.ndarray         # (n,)
    states: np.ndarray        # (n, B, 2) lifted coordinates
    derivatives: np.ndarray   # (n, B, 2)
    fiber_point: tuple = ()
    tol: float = DEFAULT_TOL
    steps: int = 0
    rejected: int = 0
    single: bool = False
    rhs: Callable | None = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        s = self.states[-1]
        return s[0] if self.single else s

    def at(self, t) -> np.ndarray:
        """Cubic Hermite dense output; shape (len(t), B, 2), or (len(t), 2) when single."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        out = self._hermite(i, t)
        return out[:, 0, :] if self.single else out

    def _hermite(self, i, t):
        t0, t1 = self.times[i], self.times[i + 1]
        h = (t1 - t0)[:, None, None]
        s = ((t - t0) / (t1 - t0))[:, None, None]
        y0, y1 = self.states[i], self.states[i + 1]
        f0, f1 = self.derivatives[i], self.derivatives[i + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    def step_from(self, i: int, dt: float) -> np.ndarray:
        """Exact RK step of length dt from accepted node i (used to polish events)."""
        z, _, _ = _dp_step(self.rhs, self.states[i], self.derivatives[i], dt)
        return z

    def to_csv(self, path, member: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x_lift", "y_lift"])
            for t, z in zip(self.times, self.states[:, member, :]):
                w.writerow([repr(float(t)), repr(float(z[0])), repr(float(z[1]))])


_A_ROWS = [np.array(row) for row in _A]


def _dp_step(rhs, z, f0, h):
    k = np.empty((7,) + z.shape)
    k[0] = f0
    flat = k.reshape(7, -1)
    for s in range(1, 7):
        k[s] = rhs(z + h * (_A_ROWS[s] @ flat[:s]).reshape(z.shape))
    # the last stage is evaluated at the 5th-order solution (FSAL)
    znew = z + h * (_A_ROWS[6] @ flat[:6]).reshape(z.shape)
    err = h * (_E @ flat).reshape(z.shape)
    return znew, k[6], err


def integrate(X: VectorField2, fiber_point: Sequence[float], initial, T: float,
              tol: float = DEFAULT_TOL, fixed_step: float | None = None,
              max_steps: int = 5_000_000, rhs: Callable | None = None) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration with PI step control.

    ``initial`` is a point (2,) or a batch (B, 2).  The local error estimate
    of every accepted step is <= ``tol`` (absolute, max over components).
    """
    if not T > 0:
        raise ValueError("duration must be positive")
    z0 = np.asarray(initial, dtype=float)
    single = z0.ndim == 1
    z = np.atleast_2d(z0).copy()
    if z.shape[0] == 1 and X is not None:
        return _integrate_single(X, fiber_point, z[0], T, tol, fixed_step, max_steps, single, rhs)
    rhs = rhs or vector_field_function(X, fiber_point)
    f = rhs(z)
    times, states, derivs = [0.0], [z.copy()], [f.copy()]
    t = 0.0
    steps = rejected = 0
    if fixed_step is not None:
        h = float(fixed_step)
    else:
        scale = max(float(np.max(np.abs(f))), 1e-12)
        h = min(T, 0.01 * tol ** 0.2 / scale * 10)
    err_prev = 1.0
    safety, facmin, facmax = 0.9, 0.2, 5.0
    alpha, beta = 0.7 / 5, 0.4 / 5
    while t < T:
        if steps + rejected > max_steps:
            raise IntegrationError("step budget exhausted", t, z)
        h = min(h, T - t)
        znew, fnew, errv = _dp_step(rhs, z, f, h)
        if fixed_step is not None:
            err = 0.0
        else:
            err = float(np.max(np.abs(errv))) / tol
        if not np.isfinite(err):
            raise IntegrationError("non-finite state", t, z)
        if err <= 1.0 or fixed_step is not None:
            t = t + h
            z, f = znew, fnew
            times.append(t)
            states.append(z.copy())
            derivs.append(f.copy())
            steps += 1
            if fixed_step is None:
                e = max(err, 1e-10)
                fac = safety * e ** (-alpha) * err_prev ** beta
                h = h * min(facmax, max(facmin, fac))
                err_prev = e
        else:
            rejected += 1
            h = h * max(facmin, safety * err ** (-0.2))
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t:.6g}, state={z.tolist()}", t, z)
    return Trajectory(np.array(times), np.array(states), np.array(derivs), tuple(fiber_point),
                      tol, steps, rejected, single, rhs)


_C2, _C3, _C4, _C5 = _A[1][0], _A[2], _A[3], _A[4]
_C6, _C7 = _A[5], _A[6]
_E1, _E3, _E4, _E5, _E6, _E7 = (float(_E[i]) for i in (0, 2, 3, 4, 5, 6))


def _integrate_single(X, fiber_point, z0, T, tol, fixed_step, max_steps, single, rhs) -> Trajectory:
    """Float-only version of the same scheme for one trajectory (much less overhead)."""
    env = el.fiber_env(fiber_point)
    env["x"] = env["y"] = 0.0
    fx, fy = el.compile_scalar(X.dx), el.compile_scalar(X.dy)

    def f(x, y):
        env["x"] = x
        env["y"] = y
        return fx(env), fy(env)

    a21 = _C2
    a31, a32 = _C3
    a41, a42, a43 = _C4
    a51, a52, a53, a54 = _C5
    a61, a62, a63, a64, a65 = _C6
    b1, _, b3, b4, b5, b6 = _C7
    e1, e3, e4, e5, e6, e7 = _E1, _E3, _E4, _E5, _E6, _E7
    x, y = float(z0[0]), float(z0[1])
    try:
        k1x, k1y = f(x, y)
    except (ArithmeticError, ValueError) as exc:
        raise IntegrationError(f"evaluation failed at the initial state: {exc}", 0.0, z0) from exc
    times, xs, ys, dxs, dys = [0.0], [x], [y], [k1x], [k1y]
    t = 0.0
    steps = rejected = 0
    fixed = fixed_step is not None
    if fixed:
        h = float(fixed_step)
    else:
        scale = max(abs(k1x), abs(k1y), 1e-12)
        h = min(T, 0.1 * tol ** 0.2 / scale)
    err_prev = 1.0
    safety, facmin, facmax = 0.9, 0.2, 5.0
    alpha, beta = 0.7 / 5, 0.4 / 5
    while t < T:
        if steps + rejected > max_steps:
            raise IntegrationError("step budget exhausted", t, np.array([x, y]))
        h = min(h, T - t)
        try:
            k2x, k2y = f(x + h * a21 * k1x, y + h * a21 * k1y)
            k3x, k3y = f(x + h * (a31 * k1x + a32 * k2x), y + h * (a31 * k1y + a32 * k2y))
            k4x, k4y = f(x + h * (a41 * k1x + a42 * k2x + a43 * k3x),
                         y + h * (a41 * k1y + a42 * k2y + a43 * k3y))
            k5x, k5y = f(x + h * (a51 * k1x + a52 * k2x + a53 * k3x + a54 * k4x),
                         y + h * (a51 * k1y + a52 * k2y + a53 * k3y + a54 * k4y))
            k6x, k6y = f(x + h * (a61 * k1x + a62 * k2x + a63 * k3x + a64 * k4x + a65 * k5x),
                         y + h * (a61 * k1y + a62 * k2y + a63 * k3y + a64 * k4y + a65 * k5y))
            xn = x + h * (b1 * k1x + b3 * k3x + b4 * k4x + b5 * k5x + b6 * k6x)
            yn = y + h * (b1 * k1y + b3 * k3y + b4 * k4y + b5 * k5y + b6 * k6y)
            k7x, k7y = f(xn, yn)
        except (ArithmeticError, ValueError) as exc:
            raise IntegrationError(f"evaluation failed near t={t:.6g}, state=[{x!r}, {y!r}]: {exc}",
                                   t, np.array([x, y])) from exc
        if fixed:
            err = 0.0
        else:
            ex = h * (e1 * k1x + e3 * k3x + e4 * k4x + e5 * k5x + e6 * k6x + e7 * k7x)
            ey = h * (e1 * k1y + e3 * k3y + e4 * k4y + e5 * k5y + e6 * k6y + e7 * k7y)
            err = max(abs(ex), abs(ey)) / tol
        if not math.isfinite(err) or not (math.isfinite(xn) and math.isfinite(yn)):
            raise IntegrationError("non-finite state", t, np.array([x, y]))
        if err <= 1.0:
            t += h
            x, y, k1x, k1y = xn, yn, k7x, k7y
            times.append(t)
            xs.append(x)
            ys.append(y)
            dxs.append(k1x)
            dys.append(k1y)
            steps += 1
            if not fixed:
                e = max(err, 1e-10)
                fac = safety * e ** (-alpha) * err_prev ** beta
                h *= min(facmax, max(facmin, fac))
                err_prev = e
        else:
            rejected += 1
            h *= max(facmin, safety * err ** (-0.2))
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t:.6g}, state=[{x!r}, {y!r}]",
                                       t, np.array([x, y]))
    states = np.stack([xs, ys], axis=1)[:, None, :]
    derivs = np.stack([dxs, dys], axis=1)[:, None, :]
    return Trajectory(np.array(times), states, derivs, tuple(fiber_point), tol, steps, rejected,
                      single, rhs or vector_field_function(X, fiber_point))


def seed_points(n: int) -> np.ndarray:
    """Deterministic low-discrepancy initial conditions on T^2."""
    g = 1.32471795724474602596  # plastic number
    i = np.arange(1, n + 1)
    return TWO_PI * np.stack([(i / g) % 1.0, (i / g**2) % 1.0], axis=1)


# ------------------------------------------------------------------ events


def _locate(traj: Trajectory, member: int, comp: int, level: float, i: int) -> float:
    """Time in [t_i, t_{i+1}] where lift component ``comp`` equals ``level``."""
    lo, hi = float(traj.times[i]), float(traj.times[i + 1])
    h = hi - lo
    y0, y1 = float(traj.states[i, member, comp]), float(traj.states[i + 1, member, comp])
    f0, f1 = h * float(traj.derivatives[i, member, comp]), h * float(traj.derivatives[i + 1, member, comp])

    def g(t):
        s = (t - lo) / h
        return ((2 * s**3 - 3 * s**2 + 1) * y0 + (s**3 - 2 * s**2 + s) * f0
                + (-2 * s**3 + 3 * s**2) * y1 + (s**3 - s**2) * f1 - level)

    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    t = 0.5 * (lo + hi)
    # polish with real RK steps and Newton on the crossing condition
    t0 = traj.times[i]
    for _ in range(3):
        z = traj.step_from(i, t - t0)
        v = traj.rhs(z)
        if v[member, comp] == 0:
            break
        dt = (z[member, comp] - level) / v[member, comp]
        t -= dt
        if abs(dt) < 1e-15 * max(1.0, abs(t)):
            break
    return float(t)


def _level_crossings(traj: Trajectory, member: int, comp: int, base: float, direction: float,
                     only=None):
    """Times where direction * (lift - base) passes 2pi n for n = 1, 2, ...

    ``only`` restricts the located crossings to a set of indices n.
    """
    u = direction * (traj.states[:, member, comp] - base) / TWO_PI
    n = np.floor(u + 1e-12)
    idx = np.nonzero(np.diff(n) > 0)[0]
    out = []
    for i in idx:
        for level_n in range(int(n[i]) + 1, int(n[i + 1]) + 1):
            if only is not None and level_n not in only:
                continue
            level = base + direction * TWO_PI * level_n
            out.append((level_n, _locate(traj, member, comp, level, i)))
    return out


# ---------------------------------------------------------------- rotation


@dataclass
class RotationEstimate:
    vector: tuple                 # mean displacement per unit time of the lift
    ratio: float | None           # w_x / w_y when |w_y| is bounded away from 0
    inverse_ratio: float | None   # w_y / w_x when |w_x| is bounded away from 0
    half_width: float             # |estimate over n turns - estimate over n/2 turns|
    turns: int
    axis: str                     # angle whose complete turns define the window
    raw_ratio: float | None = None
    initial: tuple = ()
    horizon: float = 0.0

    def to_dict(self) -> dict:
        f = lambda v: None if v is None else float(v)  # noqa: E731
        return {"vector": [float(v) for v in self.vector], "ratio": f(self.ratio),
                "inverse_ratio": f(self.inverse_ratio), "half_width": float(self.half_width),
                "turns": int(self.turns), "axis": self.axis, "raw_ratio": f(self.raw_ratio),
                "initial": [float(v) for v in self.initial], "horizon": float(self.horizon)}


def _ratio_estimate(traj: Trajectory, member: int, horizon: float, initial) -> RotationEstimate:
    z0 = traj.states[0, member]
    z1 = traj.states[-1, member]
    w = (z1 - z0) / horizon
    dz = np.abs(z1 - z0)
    # complete turns of y define the window whenever w_y is bounded away from 0
    d = 1 if (dz[1] >= 4 * np.pi and dz[1] >= 1e-3 * dz.max()) else 0
    o = 1 - d
    sign = 1.0 if z1[d] >= z0[d] else -1.0
    u = sign * (traj.states[:, member, d] - z0[d]) / TWO_PI
    n = max(int(np.floor(np.max(u) + 1e-12)), 0)
    cross = dict(_level_crossings(traj, member, d, z0[d], sign, only={n, n // 2}))

    def over(k):
        t = cross[k]
        z = traj.at([t])
        z = z[0] if traj.single else z[0, member]
        return (z[o] - z0[o]) / (z[d] - z0[d])

    if n >= 2:
        r = over(n)
        half = abs(r - over(n // 2))
    else:
        r = (z1[o] - z0[o]) / (z1[d] - z0[d]) if z1[d] != z0[d] else 0.0
        half = float("inf")
    # r = d(other)/d(dominant)
    if d == 1:
        ratio, inv = r, (1.0 / r if abs(r) > 1e-3 else None)
    else:
        inv, ratio = r, (1.0 / r if abs(r) > 1e-3 else None)
    raw = float(w[0] / w[1]) if abs(w[1]) > 1e-12 else None
    return RotationEstimate((float(w[0]), float(w[1])), ratio, inv, float(half), int(n),
                            "xy"[d], raw, tuple(float(v) for v in initial), float(horizon))


def rotation_vector(X: VectorField2, fiber_point: Sequence[float] = (), initial=(0.0, 0.0),
                    T: float = DEFAULT_ROTATION_HORIZON, tol: float = DEFAULT_TOL):
    """Rotation vector and winding ratio from one lifted trajectory.

    The ratio is measured over complete turns of the dominant angle, which
    removes the bounded oscillation that plain lift(T)/T carries.  A batch
    of initial conditions (B, 2) returns a list of estimates.
    """
    if T < 100:
        raise ValueError("rotation horizon must be at least 100")
    init = np.asarray(initial, dtype=float)
    batch = init.ndim == 2
    ests = []
    for z0 in np.atleast_2d(init):
        traj = integrate(X, fiber_point, z0, T, tol)
        ests.append(_ratio_estimate(traj, 0, T, z0))
    return ests if batch else ests[0]


# ---------------------------------------------------------------- sections


@dataclass
class SectionData:
    axis: str
    level: float
    seeds: np.ndarray
    crossings: list                # per seed: other coordinate mod 2pi at each crossing
    crossing_times: list           # per seed
    return_times: np.ndarray       # all seeds, consecutive differences
    fiber_point: tuple = ()

    @property
    def return_map(self) -> list:
        return [(float(a), float(b)) for xs in self.crossings for a, b in zip(xs[:-1], xs[1:])]

    @property
    def spread(self) -> float:
        T = self.return_times
        return float((T.max() - T.min()) / T.mean())

    def summary(self) -> dict:
        T = self.return_times
        return {"axis": self.axis, "level": float(self.level), "returns": int(T.size),
                "seeds": len(self.crossings), "max": float(T.max()), "min": float(T.min()),
                "mean": float(T.mean()), "spread": self.spread}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "x_i", "T_i"])
            i = 0
            for xs, ts in zip(self.crossings, self.crossing_times):
                for a, dt in zip(xs[:-1], np.diff(ts)):
                    w.writerow([i, repr(float(a)), repr(float(dt))])
                    i += 1


def poincare_section(X: VectorField2, fiber_point: Sequence[float] = (), level: float = 0.0,
                     n_returns: int = DEFAULT_RETURNS, axis: str = "y",
                     n_seeds: int = DEFAULT_SECTION_SEEDS, tol: float = DEFAULT_TOL,
                     eps_transversal: float = EPS_TRANSVERSAL) -> SectionData:
    """Return times to the circle {axis = level} from equispaced seeds on it."""
    comp = 1 if axis == "y" else 0
    other = 1 - comp
    s = np.linspace(0.0, TWO_PI, 512, endpoint=False)
    pts = np.zeros((s.size, 2))
    pts[:, comp] = level
    pts[:, other] = s
    rhs = vector_field_function(X, fiber_point)
    v = rhs(pts)[:, comp]
    if np.min(np.abs(v)) <= eps_transversal or (v.max() > 0 and v.min() < 0):
        raise NonTransversalError(
            f"section {axis}={level:g} is not transversal: min |X^{axis}| = {np.min(np.abs(v)):.3g}")
    direction = 1.0 if v[0] > 0 else -1.0
    seeds = np.zeros((n_seeds, 2))
    seeds[:, comp] = level
    seeds[:, other] = TWO_PI * np.arange(n_seeds) / n_seeds

    g = Grid2(64)
    speed = np.abs(rhs(np.stack([g.X.ravel(), g.Y.ravel()], axis=1))[:, comp]).mean()
    chunk = 1.2 * (n_returns + 1) * TWO_PI / max(speed, 1e-6)

    times, other_vals = [], []
    for b in range(n_seeds):
        tb, xb = _seed_returns(X, fiber_point, seeds[b], comp, direction, n_returns, chunk, tol)
        times.append(tb)
        other_vals.append(xb)
    times = [np.array(tb[: n_returns + 1]) for tb in times]
    xs = [np.array(xb[: n_returns + 1]) for xb in other_vals]
    rt = np.concatenate([np.diff(tb) for tb in times])
    return SectionData(axis, float(level), seeds, xs, times, rt, tuple(fiber_point))


def _seed_returns(X, fiber_point, seed, comp, direction, n_returns, chunk, tol):
    """Crossing times and other-coordinate values for one seed, integrated in chunks."""
    other = 1 - comp
    times, vals = [0.0], [float(seed[other]) % TWO_PI]
    z = np.array(seed, dtype=float)
    base = float(seed[comp])
    counted = 0
    t_offset = 0.0
    for _ in range(1000):
        traj = integrate(X, fiber_point, z, chunk, tol)
        for level_n, t in _level_crossings(traj, 0, comp, base, direction):
            if level_n <= counted:
                continue
            zz = traj.at([t])[0]
            times.append(t_offset + t)
            vals.append(float(zz[other]) % TWO_PI)
            counted = level_n
        z = traj.final.copy()
        # rebase the lift so crossing levels keep counting from the seed
        shift = math.floor(direction * (z[comp] - base) / TWO_PI)
        base += direction * TWO_PI * shift
        counted -= shift
        t_offset += chunk
        if len(times) >= n_returns + 1:
            return times, vals
    raise IntegrationError("section returns not reached")


def constant_return_time_test(sd: SectionData, rel_tol: float = 1e-6) -> dict:
    if sd.return_times.size < 16:
        raise ValueError("need at least 16 return times")
    spread = sd.spread
    return {"constant": bool(spread <= rel_tol), "spread": spread, "rel_tol": float(rel_tol),
            "returns": int(sd.return_times.size)}


# ------------------------------------------------------------------- drift


def drift_check(f, traj: Trajectory, grid: Grid2 | None = None, eps: float = 1e-12) -> float:
    """max_t |f(gamma(t)) - f(gamma(0))| / max(osc f, eps), over all batch members.

    ``f`` is an Expr (evaluated at the fiber point) or a SpectralField.
    """
    grid = grid or Grid2()
    pts = np.mod(traj.states, TWO_PI)
    if isinstance(f, SpectralField):
        vals = f.evaluate(pts[..., 0], pts[..., 1])
        osc = float(np.ptp(f.values()))
    else:
        f = el.as_expr(f)
        env = el.fiber_env(traj.fiber_point)
        env["x"], env["y"] = pts[..., 0], pts[..., 1]
        vals = np.broadcast_to(el.evaluate(f, env), pts.shape[:-1])
        gv = el.sample_values(f, traj.fiber_point, grid)
        osc = float(gv.max() - gv.min())
    drift = float(np.max(np.abs(vals - vals[0][None, :])))
    return drift / max(osc, eps)
