"""Spectral representation of scalar fields on the 2-torus.

Coefficients follow the convention f(x, y) = sum_{j,k} c[j,k] exp(i(jx + ky)),
so a table of size N x N is ``fft2(values) / N**2``.  Axis 0 carries the x
mode ``j`` and axis 1 the y mode ``k``.  Real fields keep only the
conjugate-symmetric half spectrum (``k >= 0``), as produced by ``rfft2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_N = 64
DEFAULT_THRESHOLD = 1e-8


@dataclass(frozen=True)
class Grid2:
    """N x N equispaced nodes on [0, 2pi)^2."""

    N: int = DEFAULT_N

    def __post_init__(self):
        n = self.N
        if n < 8 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {n}")

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N) * self.spacing

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.nodes[:, None], self.shape)

    @property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.nodes[None, :], self.shape)

    def refined(self, factor: int = 2) -> "Grid2":
        return Grid2(self.N * factor)


def _freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n)


class SpectralField:
    """Truncated Fourier coefficient table of a scalar field on T^2."""

    __slots__ = ("coeffs", "real")

    def __init__(self, coeffs: np.ndarray, real: bool = True):
        coeffs = np.asarray(coeffs, dtype=complex)
        n = coeffs.shape[0]
        expected = (n, n // 2 + 1) if real else (n, n)
        if coeffs.shape != expected:
            raise ValueError(f"coefficient table has shape {coeffs.shape}, expected {expected}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "real", real)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    # ------------------------------------------------------------ construction
    @classmethod
    def from_values(cls, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values)
        n = values.shape[0]
        if np.isrealobj(values):
            return cls(np.fft.rfft2(values) / n**2, real=True)
        return cls(np.fft.fft2(values) / n**2, real=False)

    @classmethod
    def from_full(cls, full: np.ndarray, real: bool = True) -> "SpectralField":
        n = full.shape[0]
        if real:
            return cls(full[:, : n // 2 + 1].copy(), real=True)
        return cls(full.copy(), real=False)

    @classmethod
    def from_modes(cls, N: int, modes: np.ndarray, values: np.ndarray, real: bool = True):
        """Build from a list of (j, k) modes with |j|, |k| < N/2."""
        full = np.zeros((N, N), dtype=complex)
        full[modes[:, 0] % N, modes[:, 1] % N] = values
        return cls.from_full(full, real=real)

    @classmethod
    def constant(cls, N: int, value: float = 1.0) -> "SpectralField":
        c = np.zeros((N, N // 2 + 1), dtype=complex)
        c[0, 0] = value
        return cls(c, real=True)

    # ------------------------------------------------------------------ access
    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    def full(self) -> np.ndarray:
        """Full N x N coefficient table (conjugate symmetry restored for real fields)."""
        if not self.real:
            return np.array(self.coeffs)
        n = self.N
        full = np.zeros((n, n), dtype=complex)
        h = n // 2 + 1
        full[:, :h] = self.coeffs
        # c[-j, -k] = conj(c[j, k]) for the missing k < 0 columns
        jj = (-np.arange(n)) % n
        kk = np.arange(h, n)
        full[:, kk] = np.conj(full[jj][:, (-kk) % n])
        return full

    def coeff(self, j: int, k: int) -> complex:
        n = self.N
        if self.real and (k % n) > n // 2:
            return complex(np.conj(self.coeffs[(-j) % n, (-k) % n]))
        return complex(self.coeffs[j % n, k % n])

    def values(self) -> np.ndarray:
        n = self.N
        if self.real:
            return np.fft.irfft2(self.coeffs * n**2, s=(n, n))
        return np.fft.ifft2(self.coeffs * n**2)

    def norm(self) -> float:
        """l2 norm of the full coefficient table."""
        return float(np.linalg.norm(self.full()))

    def degree(self, rel_tol: float = 1e-14) -> int:
        """Largest |j| or |k| carrying a coefficient above ``rel_tol`` of the maximum."""
        full = np.abs(self.full())
        top = full.max()
        if top == 0.0:
            return 0
        f = np.abs(_freqs(self.N)).astype(int)
        mask = full > rel_tol * top
        deg = np.maximum(f[:, None], f[None, :])
        return int(deg[mask].max())

    # -------------------------------------------------------------- arithmetic
    def __add__(self, other: "SpectralField") -> "SpectralField":
        if self.real and other.real:
            return SpectralField(self.coeffs + other.coeffs, real=True)
        return SpectralField(self.full() + other.full(), real=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + other.scale(-1.0)

    def scale(self, s: complex) -> "SpectralField":
        if self.real and np.isreal(s):
            return SpectralField(self.coeffs * float(np.real(s)), real=True)
        return SpectralField(self.full() * s, real=False)

    def resample(self, M: int) -> "SpectralField":
        """Zero-pad or truncate to an M x M table (the Nyquist row/column is dropped)."""
        return SpectralField.from_full(_resize(self.full(), M), real=self.real)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate the trigonometric polynomial at arbitrary points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        full = self.full()
        n = self.N
        f = _freqs(n)
        keep = np.abs(f) < n // 2
        idx = np.nonzero(keep)[0]
        # trim to the occupied band to keep the sums small
        sub = full[np.ix_(idx, idx)]
        occupied = np.abs(sub) > 0
        if not occupied.any():
            return np.zeros(np.broadcast(x, y).shape)
        fj = f[idx]
        band = int(max(np.abs(fj[occupied.any(axis=1)]).max(), np.abs(fj[occupied.any(axis=0)]).max()))
        sel = np.nonzero(np.abs(fj) <= band)[0]
        sub = sub[np.ix_(sel, sel)]
        fsel = fj[sel]
        xb, yb = np.broadcast_arrays(x, y)
        ex = np.exp(1j * np.multiply.outer(xb.ravel(), fsel))
        ey = np.exp(1j * np.multiply.outer(yb.ravel(), fsel))
        out = np.sum((ex @ sub) * ey, axis=1)
        out = out.reshape(xb.shape)
        return out.real if self.real else out


def _resize(full: np.ndarray, M: int) -> np.ndarray:
    """Map an N x N coefficient table to M x M by mode index, dropping Nyquist modes."""
    n = full.shape[0]
    half = min(n, M) // 2
    out = np.zeros((M, M), dtype=complex)
    modes = np.arange(-half + 1, half)
    out[np.ix_(modes % M, modes % M)] = full[np.ix_(modes % n, modes % n)]
    return out


# ------------------------------------------------------------------ operations


def spectral_derivative(f: SpectralField, axis: str) -> SpectralField:
    """Exact derivative of a band-limited field along ``axis`` ('x' or 'y')."""
    n = f.N
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    fr = _freqs(n)
    fr[n // 2] = 0.0  # the Nyquist mode has no real derivative
    if f.real:
        if axis == "x":
            mult = 1j * fr[:, None]
        else:
            fk = np.arange(n // 2 + 1, dtype=float)
            fk[-1] = 0.0
            mult = 1j * fk[None, :]
        return SpectralField(f.coeffs * mult, real=True)
    mult = 1j * (fr[:, None] if axis == "x" else fr[None, :])
    return SpectralField(f.coeffs * mult, real=False)


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased product: zero-pad to 2N, multiply pointwise, truncate back to N."""
    if f.N != g.N:
        raise ValueError("fields live on different grids")
    n = f.N
    M = 2 * n
    fv = np.fft.ifft2(_resize(f.full(), M)) * M**2
    gv = np.fft.ifft2(_resize(g.full(), M)) * M**2
    prod = np.fft.fft2(fv * gv) / M**2
    full = _resize(prod, n)
    return SpectralField.from_full(full, real=f.real and g.real)


def band_modes(K: int) -> np.ndarray:
    """All modes (j, k) with |j|, |k| <= K, j-major order; (0, 0) sits at the centre."""
    r = np.arange(-K, K + 1)
    J, Kk = np.meshgrid(r, r, indexing="ij")
    return np.stack([J.ravel(), Kk.ravel()], axis=1)


def multiplication_matrix(g: SpectralField, row_modes: np.ndarray, col_modes: np.ndarray) -> np.ndarray:
    """Galerkin matrix of u -> g*u between the given mode lists."""
    n = g.N
    full = g.full()
    dj = row_modes[:, 0][:, None] - col_modes[:, 0][None, :]
    dk = row_modes[:, 1][:, None] - col_modes[:, 1][None, :]
    inside = (np.abs(dj) < n // 2) & (np.abs(dk) < n // 2)
    out = np.where(inside, full[dj % n, dk % n], 0.0)
    return out


def advection_matrix(X, band: int | None = None, test_band: int | None = None) -> np.ndarray:
    """Galerkin truncation of f -> X1 df/dx + X2 df/dy.

    ``X`` is a pair of SpectralFields (the components sampled at one fiber
    point).  Columns are ``band_modes(band)`` (default N/4); rows are
    ``band_modes(test_band)`` (default: the same band, giving a square matrix).
    """
    X1, X2 = X
    n = X1.N
    K = n // 4 if band is None else band
    R = K if test_band is None else test_band
    cols = band_modes(K)
    rows = band_modes(R)
    return (multiplication_matrix(X1, rows, cols) * (1j * cols[:, 0])[None, :]
            + multiplication_matrix(X2, rows, cols) * (1j * cols[:, 1])[None, :])


# ------------------------------------------------------------------ null space


class NumericalRankAmbiguity(UserWarning):
    pass


@dataclass
class KernelReport:
    singular_values: np.ndarray
    threshold: float
    sigma_max: float
    basis: np.ndarray  # columns are kernel vectors
    residuals: np.ndarray
    ambiguous: bool = False
    dimension_loose: int = 0
    constraint: str = "none"
    tail: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]

    def to_dict(self, tail: int = 12) -> dict:
        sv = self.singular_values
        return {
            "dimension": int(self.dimension),
            "dimension_loose": int(self.dimension_loose),
            "ambiguous": bool(self.ambiguous),
            "threshold": float(self.threshold),
            "sigma_max": float(self.sigma_max),
            "constraint": self.constraint,
            "smallest_singular_values": [float(s) for s in sv[::-1][:tail]],
            "kernel_residuals": [float(r) for r in self.residuals],
        }


def kernel_basis(A: np.ndarray, constraint: str = "none", threshold: float = DEFAULT_THRESHOLD,
                 zero_index: int | None = None) -> KernelReport:
    """Right singular vectors of ``A`` with singular value <= threshold * sigma_max.

    With ``constraint='mean-zero'`` the column ``zero_index`` (default: the
    centre column, which is the (0,0) mode for ``band_modes`` ordering) is
    projected out before the decomposition; returned vectors carry a zero
    there.  Singular values falling between ``threshold`` and
    ``10 * threshold`` (relative) set ``ambiguous`` and are counted in
    ``dimension_loose`` instead of being silently assigned.
    """
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    m, n = A.shape
    keep = np.arange(n)
    if constraint == "mean-zero":
        z = (n - 1) // 2 if zero_index is None else zero_index
        keep = np.delete(keep, z)
    elif constraint != "none":
        raise ValueError(f"unknown constraint {constraint!r}")
    B = A[:, keep]
    nk = B.shape[1]
    if nk == 0:
        return KernelReport(np.zeros(0), threshold, 0.0, np.zeros((n, 0), A.dtype),
                            np.zeros(0), constraint=constraint)
    U, s, Vh = np.linalg.svd(B, full_matrices=nk > m)
    sv = np.zeros(nk)
    sv[: s.size] = s
    smax = float(sv[0]) if sv.size else 0.0
    if smax == 0.0:
        idx = np.arange(nk)
    else:
        idx = np.nonzero(sv <= threshold * smax)[0]
    loose = int(np.count_nonzero(sv <= 10 * threshold * smax)) if smax > 0 else nk
    ambiguous = loose != idx.size
    V = Vh.conj().T
    Vk = V[:, idx[::-1]]  # ascending singular value, i.e. descending margin
    basis = np.zeros((n, Vk.shape[1]), dtype=np.result_type(A.dtype, Vk.dtype))
    basis[keep, :] = Vk
    res = np.linalg.norm(A @ basis, axis=0) if basis.shape[1] else np.zeros(0)
    return KernelReport(sv, threshold, smax, basis, res, ambiguous=ambiguous,
                        dimension_loose=loose, constraint=constraint)


# -------------------------------------------------------- real-form reduction


def half_plane_modes(K: int) -> np.ndarray:
    """Representatives m of {m, -m} pairs in the band, excluding (0, 0)."""
    modes = band_modes(K)
    sel = (modes[:, 0] > 0) | ((modes[:, 0] == 0) & (modes[:, 1] > 0))
    return modes[sel]


def _mode_index(K: int, modes: np.ndarray) -> np.ndarray:
    return (modes[:, 0] + K) * (2 * K + 1) + (modes[:, 1] + K)


def realify(A: np.ndarray, col_band: int, row_band: int) -> np.ndarray:
    """Express a reality-preserving complex Galerkin matrix in the orthonormal
    real basis {1, sqrt2 cos(m.z), sqrt2 sin(m.z)} on both sides.

    Parameter order: [a_0, a_m1, b_m1, a_m2, b_m2, ...] over ``half_plane_modes``.
    """
    A = _realify_cols(A, col_band)
    A = _realify_cols(A.T, row_band).T
    # after both transforms the matrix is real up to roundoff
    return np.ascontiguousarray(A.real)


def _realify_cols(A: np.ndarray, K: int) -> np.ndarray:
    hp = half_plane_modes(K)
    ip = _mode_index(K, hp)
    im = _mode_index(K, -hp)
    i0 = _mode_index(K, np.zeros((1, 2), dtype=int))[0]
    out = np.empty(A.shape, dtype=complex)
    s = 1.0 / np.sqrt(2.0)
    out[:, 0] = A[:, i0]
    # coefficient c_m = (a - i b)/sqrt2, c_{-m} = (a + i b)/sqrt2
    out[:, 1::2] = (A[:, ip] + A[:, im]) * s
    out[:, 2::2] = (-1j * A[:, ip] + 1j * A[:, im]) * s
    return out


def _realify_rows_coeffs(c: np.ndarray, K: int) -> np.ndarray:
    """Coefficient vector (band order) of a real field -> real parameters."""
    hp = half_plane_modes(K)
    ip = _mode_index(K, hp)
    im = _mode_index(K, -hp)
    i0 = _mode_index(K, np.zeros((1, 2), dtype=int))[0]
    out = np.empty(c.shape[0], dtype=float)
    s = 1.0 / np.sqrt(2.0)
    out[0] = c[i0].real
    out[1::2] = ((c[ip] + c[im]) * s).real
    out[2::2] = (1j * (c[ip] - c[im]) * s).real
    return out


def params_to_coeffs(p: np.ndarray, K: int) -> np.ndarray:
    """Real parameters -> complex coefficient vector in ``band_modes(K)`` order."""
    hp = half_plane_modes(K)
    ip = _mode_index(K, hp)
    im = _mode_index(K, -hp)
    i0 = _mode_index(K, np.zeros((1, 2), dtype=int))[0]
    c = np.zeros((2 * K + 1) ** 2, dtype=complex)
    s = 1.0 / np.sqrt(2.0)
    a, b = p[1::2], p[2::2]
    c[i0] = p[0]
    c[ip] = (a - 1j * b) * s
    c[im] = (a + 1j * b) * s
    return c


def coeffs_to_params(c: np.ndarray, K: int) -> np.ndarray:
    return _realify_rows_coeffs(c, K)


def field_from_params(p: np.ndarray, K: int, N: int) -> SpectralField:
    return SpectralField.from_modes(N, band_modes(K), params_to_coeffs(p, K), real=True)


def params_from_field(f: SpectralField, K: int) -> np.ndarray:
    full = f.full()
    modes = band_modes(K)
    c = full[modes[:, 0] % f.N, modes[:, 1] % f.N]
    return coeffs_to_params(c, K)
