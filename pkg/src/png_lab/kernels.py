"""Exact determinantal oracles built on Bessel functions of argument ``2T``.

B_T(i, j) = sum_{l >= 0} J_{i+l}(2T) J_{j+l}(2T) is the orthogonal projection onto
the span of the vectors ``psi_m(j) = J_{j+m}(2T)``, ``m >= 0``. The three-term
recurrence gives ``H psi_m = (2 - m/T) psi_m`` for the operator
``(H psi)(j) = -psi(j+1) - psi(j-1) + (2 + j/T) psi(j)``, so ``B_T = 1_{lambda <= 2}(H)``.
The extended kernel is evaluated through the eigen-decomposition of the truncated H,
where each branch only ever multiplies by one-sided exponentials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.lapack import dgetc2

from .png_sim import SmoothedStep

MAX_ORDER = 10_000_000
TAIL_CUTOFF = 1e-30
THETA_CAP = 50.0


class BesselRangeWarning(RuntimeWarning):
    """A requested Bessel value under- or overflowed double precision."""


# --- Bessel functions --------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _miller(z, n_lo, n_hi):
    """``J_n(z)`` for ``0 <= n_lo <= n <= n_hi`` by normalised downward recurrence."""
    out = np.zeros(n_hi - n_lo + 1)
    if z == 0.0:
        if n_lo == 0:
            out[0] = 1.0
        return out
    za = z if z > 1.0 else 1.0
    top = n_hi if n_hi > int(z) else int(z)
    N = top + 60 + int(16.0 * za ** (1.0 / 3.0))
    N += N & 1
    big = 1e100
    j_next = 0.0
    j_cur = 1e-280
    s = 0.0
    for k in range(N, 0, -1):
        if n_lo <= k <= n_hi:
            out[k - n_lo] = j_cur
        if k % 2 == 0:
            s += 2.0 * j_cur
        j_prev = (2.0 * k / z) * j_cur - j_next
        j_next = j_cur
        j_cur = j_prev
        if abs(j_cur) > big:
            j_cur /= big
            j_next /= big
            s /= big
            lo = k - n_lo if k > n_lo else 0
            for i in range(lo, out.size):
                out[i] /= big
    if n_lo == 0:
        out[0] = j_cur
    s += j_cur
    for i in range(out.size):
        out[i] /= s
    return out


def _check_args(n_max: int, z: float) -> None:
    if z < 0 or not math.isfinite(z):
        raise ValueError("bessel argument must be finite and non-negative")
    if n_max > MAX_ORDER:
        raise ValueError(f"order magnitude limited to {MAX_ORDER}")
    if 0 < z and 2.0 * (max(n_max, z) + 100) / z > 1e200:
        raise OverflowError("argument too small for the downward recurrence at this order")


def bessel_range(n_lo: int, n_hi: int, z: float) -> np.ndarray:
    """``[J_n(z) for n in n_lo..n_hi]``, negative orders through ``J_{-n} = (-1)^n J_n``."""
    n_lo, n_hi = int(n_lo), int(n_hi)
    if n_hi < n_lo:
        return np.empty(0)
    m = max(abs(n_lo), abs(n_hi))
    _check_args(m, z)
    lo_abs = 0 if n_lo <= 0 <= n_hi else min(abs(n_lo), abs(n_hi))
    vals = _miller(float(z), lo_abs, m)
    n = np.arange(n_lo, n_hi + 1)
    a = np.abs(n)
    out = vals[a - lo_abs]
    odd_neg = (n < 0) & (a % 2 == 1)
    out[odd_neg] = -out[odd_neg]
    return out


def bessel_j(n: int, z: float) -> float:
    """``J_n(z)``; warns with :class:`BesselRangeWarning` when the value underflows."""
    v = float(bessel_range(n, n, z)[0])
    if abs(v) < 1e-300 and not (z == 0 and n != 0):
        warnings.warn(f"J_{n}({z}) underflows double precision", BesselRangeWarning, stacklevel=2)
    return v


# --- kernel windows ----------------------------------------------------------------


@dataclass(frozen=True)
class IndexWindow:
    j_min: int
    j_max: int
    T: float

    def __post_init__(self):
        if not self.j_min < self.j_max:
            raise ValueError("window needs j_min < j_max")

    @property
    def size(self) -> int:
        return self.j_max - self.j_min + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    @classmethod
    def entry(cls, T: float) -> IndexWindow:
        """Entry-accurate window around the soft edge ``2T``."""
        c, w = math.ceil(2 * T), math.ceil(12 * T ** (1 / 3))
        return cls(c - w, c + w, T)

    @classmethod
    def spectral(cls, T: float) -> IndexWindow:
        c = math.ceil(2 * T)
        return cls(-c - 50, c + math.ceil(10 * T ** (1 / 3)) + 50, T)

    def is_spectral(self) -> bool:
        c = math.ceil(2 * self.T)
        return self.j_min <= -c - 50 and self.j_max >= c + math.ceil(10 * self.T ** (1 / 3)) + 50

    def position(self, j) -> np.ndarray:
        j = np.asarray(j)
        if np.any((j < self.j_min) | (j > self.j_max)):
            raise IndexError("index outside the window")
        return j - self.j_min


@nb.njit(cache=True, nogil=True)
def _bessel_kernel(J, offset, n, tail_len):
    """B on ``n`` consecutive indices starting at ``J[offset]``; J extends ``tail_len`` past."""
    B = np.empty((n, n))
    last = offset + n - 1
    # boundary row: explicit sums to the end of the stored tail
    for j in range(n):
        acc = 0.0
        a, b = last, offset + j
        for l in range(J.size - a):
            acc += J[a + l] * J[b + l]
        B[n - 1, j] = acc
        B[j, n - 1] = acc
    for i in range(n - 2, -1, -1):
        ji = J[offset + i]
        for j in range(n - 2, i - 1, -1):
            v = B[i + 1, j + 1] + ji * J[offset + j]
            B[i, j] = v
            B[j, i] = v
    return B


def _tail_extent(T: float, j_max: int) -> int:
    """Indices beyond ``j_max`` needed until ``|J_k(2T)| < TAIL_CUTOFF``."""
    k = max(j_max, math.ceil(2 * T))
    step = max(16, math.ceil(4 * T ** (1 / 3)))
    while True:
        k += step
        if abs(float(bessel_range(k, k, 2 * T)[0])) < TAIL_CUTOFF and k > 2 * T:
            return k - j_max


@dataclass(frozen=True, eq=False)
class KernelWindow:
    window: IndexWindow
    B: np.ndarray
    H: np.ndarray
    J: np.ndarray
    tail_bound: float
    _eig: list = field(default_factory=list, repr=False)

    @property
    def T(self) -> float:
        return self.window.T

    def entry(self, i: int, j: int) -> float:
        p = self.window.position([i, j])
        return float(self.B[p[0], p[1]])

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigen-decomposition of the truncated H (cached)."""
        if not self._eig:
            n = self.window.size
            d = 2.0 + self.window.indices / self.T
            lam, Q = eigh_tridiagonal(d, -np.ones(n - 1))
            self._eig.extend([lam, Q])
        return self._eig[0], self._eig[1]

    def spectral_projection(self, threshold: float = 2.0) -> np.ndarray:
        """``1_{lambda <= threshold}(H)`` on the window, split half a gap above it."""
        lam, Q = self.eig()
        sel = lam <= threshold + 0.5 / self.T
        return (Q[:, sel] * 1.0) @ Q[:, sel].T


def operator_h(window: IndexWindow) -> np.ndarray:
    n = window.size
    H = np.diag(2.0 + window.indices / window.T)
    off = -np.ones(n - 1)
    H += np.diag(off, 1) + np.diag(off, -1)
    return H


def build_kernel(T: float, window: IndexWindow | None = None) -> KernelWindow:
    """B_T and H on ``window`` (entry-accurate default).

    The sum over ``l`` stops where ``|J_k(2T)| < 1e-30``; beyond that point the terms
    decay at least geometrically and ``tail_bound`` bounds what was dropped.
    """
    if window is None:
        window = IndexWindow.entry(T)
    if window.T != T:
        window = IndexWindow(window.j_min, window.j_max, T)
    if T <= 0:
        raise ValueError("build_kernel needs T > 0")
    tail = _tail_extent(T, window.j_max)
    J = bessel_range(window.j_min, window.j_max + tail, 2 * T)
    B = _bessel_kernel(J, 0, window.size, tail)
    last = abs(J[-1])
    ratio = min(T / (window.j_max + tail + 1), 0.999)
    tail_bound = last * last / (1 - ratio * ratio)
    return KernelWindow(window, B, operator_h(window), J, tail_bound)


def bessel_closed_form(T: float, i: int, j: int) -> float:
    """``B_T(i, j) = T (J_{i-1} J_j - J_i J_{j-1}) / (i - j)`` for ``i != j``."""
    if i == j:
        raise ValueError("closed form needs i != j")
    lo, hi = min(i, j) - 1, max(i, j)
    J = bessel_range(lo, hi, 2 * T)
    g = lambda k: J[k - lo]  # noqa: E731
    return T * (g(i - 1) * g(j) - g(i) * g(j - 1)) / (i - j)


# --- extended kernel ----------------------------------------------------------------


def _check_theta(kw: KernelWindow, *thetas: float, cap: float = THETA_CAP) -> None:
    for th in thetas:
        if abs(th) * kw.T > cap:
            raise ValueError(f"|theta| * T = {abs(th) * kw.T:.3g} exceeds the cap {cap}")


def extended_matrix(kw: KernelWindow, theta1: float, theta2: float, branch: str | None = None,
                    cap: float = THETA_CAP) -> np.ndarray:
    """Matrix ``A`` with ``K_T(theta1, j1; theta2, j2) = A[j2, j1]`` (window positions).

    ``branch='B'`` is ``e^{-T theta1 H} B e^{T theta2 H}`` and needs ``theta2 >= theta1``;
    ``branch='B-1'`` is the same with ``B - 1`` and needs ``theta2 < theta1``. Each
    keeps only the spectral half on which its exponential does not grow with the
    separation beyond the gauge factor ``e^{2T(theta2-theta1)}``.
    """
    _check_theta(kw, theta1, theta2, cap=cap)
    auto = "B" if theta2 >= theta1 else "B-1"
    if branch is None:
        branch = auto
    if branch != auto:
        raise ValueError(f"branch {branch!r} grows without bound for theta1={theta1}, theta2={theta2}")
    lam, Q = kw.eig()
    delta = kw.T * (theta2 - theta1)
    low = lam <= 2.0 + 0.5 / kw.T
    if branch == "B":
        w = np.exp(delta * lam[low])
        return (Q[:, low] * w) @ Q[:, low].T
    w = np.exp(delta * lam[~low])
    return -(Q[:, ~low] * w) @ Q[:, ~low].T


def extended_kernel(kw: KernelWindow, theta1: float, j1: int, theta2: float, j2: int,
                    branch: str | None = None) -> float:
    A = extended_matrix(kw, theta1, theta2, branch)
    p1, p2 = kw.window.position([j1, j2])
    return float(A[p2, p1])


def correlation_matrix(kw: KernelWindow, points) -> np.ndarray:
    """``[K_T(theta_k, j_k; theta_l, j_l)]_{k,l}`` for points ``(theta, j)``."""
    pts = list(points)
    m = len(pts)
    out = np.empty((m, m))
    cache: dict = {}
    for k, (tk, jk) in enumerate(pts):
        for l, (tl, jl) in enumerate(pts):
            key = (tk, tl)
            if key not in cache:
                cache[key] = extended_matrix(kw, tk, tl)
            p1, p2 = kw.window.position([jk, jl])
            out[k, l] = cache[key][p2, p1]
    return out


# --- commutator trace ---------------------------------------------------------------


@dataclass(frozen=True)
class TraceReport:
    trace_matrix: float
    trace_closed: float
    stated_closed: float

    def __iter__(self):
        yield self.trace_matrix
        yield self.trace_closed


def _smoothed_window(T: float, f: SmoothedStep) -> IndexWindow:
    lo, hi = f.zone(T)
    base = IndexWindow.entry(T)
    return IndexWindow(min(base.j_min, math.floor(lo) - 5), max(base.j_max, math.ceil(hi) + 5), T)


def commutator_trace(kw: KernelWindow, f: SmoothedStep) -> TraceReport:
    """``Tr(B F)`` from the explicit commutator matrix and from the nearest-neighbour sum.

    With ``D = diag(f_T)``, ``F = [H,D]D^3 - D^3[H,D] - 3D[H,D]D^2 + 3D^2[H,D]D`` has
    entries ``H(i,j) (f_j - f_i)^4``. H has ``-1`` off the diagonal, so
    ``Tr(B F) = -2 sum_i B(i,i+1) (f(i+1) - f(i))^4``; ``trace_closed`` carries this
    sign and ``stated_closed`` is the same sum without it.
    """
    T = kw.T
    lo, hi = f.zone(T)
    if lo <= kw.window.j_min or hi >= kw.window.j_max:
        raise ValueError("transition zone of f_T is clipped by the window")
    fT = f.scaled(kw.window.indices, T)
    H = kw.H
    D = np.diag(fT)
    C = H @ D - D @ H
    D2, D3 = D @ D, D @ D @ D
    F = C @ D3 - D3 @ C - 3 * D @ C @ D2 + 3 * D2 @ C @ D
    trace_matrix = float(np.sum(kw.B.T * F))
    diff4 = np.diff(fT) ** 4
    nn = np.diagonal(kw.B, 1)
    stated = float(2.0 * np.sum(nn * diff4))
    return TraceReport(trace_matrix, -stated, stated)


def trace_scan(T_values, M: float = 2.0) -> list[TraceReport]:
    f = SmoothedStep(M)
    out = []
    for T in T_values:
        kw = build_kernel(T, _smoothed_window(T, f))
        out.append(commutator_trace(kw, f))
    return out


# --- edge bounds ----------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeReport:
    T: float
    s: np.ndarray
    values: np.ndarray
    max_abs: float
    max_ratio: float


def edge_profile(T: float, s_grid) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s_grid, dtype=float)
    c = T ** (1 / 3)
    n = np.floor(2 * T + s * c).astype(np.int64)
    J = bessel_range(int(n.min()), int(n.max()), 2 * T)
    return s, c * J[n - n.min()]


def edge_bounds(T: float, s_grid) -> EdgeReport:
    """Uniform bound on ``T^{1/3} J_{[2T + s T^{1/3}]}(2T)`` and its ratio to ``e^{-s/2}``."""
    if T < 50:
        raise ValueError("edge bounds are reported for T >= 50")
    s, vals = edge_profile(T, s_grid)
    pos = s >= 0
    ratio = float(np.max(np.abs(vals[pos]) / np.exp(-s[pos] / 2))) if np.any(pos) else 0.0
    return EdgeReport(T, s, vals, float(np.max(np.abs(vals))), ratio)


# --- gap probabilities ------------------------------------------------------------------


def det_full_pivot(A: np.ndarray) -> float:
    """Determinant through LU with complete pivoting (LAPACK ``dgetc2``)."""
    A = np.array(A, dtype=float, order="F")
    if A.size == 0:
        return 1.0
    lu, ipiv, jpiv, _ = dgetc2(A)
    n = A.shape[0]
    flips = int(np.sum(ipiv != np.arange(n))) + int(np.sum(jpiv != np.arange(n)))
    d = float(np.prod(np.diag(lu)))
    return -d if flips % 2 else d


def default_gap_cutoff(T: float) -> int:
    return math.ceil(2 * T) + math.ceil(12 * T ** (1 / 3))


def gap_probability(T: float, n: int, j_max: int | None = None) -> float:
    """``P(h(0, T) <= n) = det(1 - B_T)`` restricted to ``{n+1, ..., j_max}``.

    The level convention is the one confirmed by Monte Carlo against the droplet.
    Not clamped: tiny negative values or values a hair above 1 are reported as is.
    """
    n = int(n)
    if T == 0:
        return 1.0 if n >= 0 else 0.0
    cutoff = default_gap_cutoff(T)
    if j_max is None:
        j_max = cutoff
    elif j_max < 2 * T + 12 * T ** (1 / 3):
        raise ValueError(f"window too small: j_max={j_max} is below 2T + 12 T^(1/3)")
    if n >= j_max:
        return 1.0
    kw = build_kernel(T, IndexWindow(n + 1, j_max, T)) if j_max > n + 1 else None
    if kw is None:
        b = float(bessel_kernel_entries(T, [j_max], [j_max])[0])
        return 1.0 - b
    return det_full_pivot(np.eye(kw.window.size) - kw.B)


def bessel_kernel_entries(T: float, i, j) -> np.ndarray:
    i, j = np.atleast_1d(i), np.atleast_1d(j)
    lo, hi = int(min(i.min(), j.min())), int(max(i.max(), j.max()))
    kw = build_kernel(T, IndexWindow(lo, hi + 1, T))
    return kw.B[i - lo, j - lo]


def gap_cdf(T: float, levels, j_max: int | None = None) -> np.ndarray:
    return np.array([gap_probability(T, int(n), j_max) for n in levels])


def gap_moments(T: float, j_max: int | None = None) -> tuple[float, float]:
    """Mean and variance of the law whose CDF is :func:`gap_probability`."""
    top = default_gap_cutoff(T) if j_max is None else j_max
    levels = np.arange(-1, top + 1)
    cdf = gap_cdf(T, levels, j_max)
    pmf = np.diff(cdf)
    k = levels[1:]
    mean = float(np.sum(k * pmf))
    return mean, float(np.sum((k - mean) ** 2 * pmf))
