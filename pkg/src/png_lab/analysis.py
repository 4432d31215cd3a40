"""Statistics consumed by the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

DEFAULT_BOOTSTRAP = 2000


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    samples: np.ndarray
    sorted: bool = field(default=True)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if np.any(np.isnan(x)):
            raise ValueError("samples contain NaN")
        x = np.sort(x)
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sorted", True)

    def __len__(self) -> int:
        return self.samples.size

    def cdf(self, q):
        return np.searchsorted(self.samples, np.asarray(q, dtype=float), side="right") / self.samples.size

    def mean(self) -> float:
        return float(np.mean(self.samples))


def _as_dist(a) -> EmpiricalDistribution:
    return a if isinstance(a, EmpiricalDistribution) else EmpiricalDistribution(a)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a, b = _as_dist(a), _as_dist(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    res = stats.ks_2samp(a.samples, b.samples, method="asymp")
    return float(res.statistic), float(res.pvalue)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0:
        return float("nan")
    return float(xc @ yc) / den


def pearson(pairs, bootstrap: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> tuple[float, tuple[float, float]]:
    """Sample correlation with a percentile bootstrap 95% interval."""
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if arr.shape[0] < 10:
        raise ValueError("pearson needs at least 10 pairs")
    x, y = arr[:, 0], arr[:, 1]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("degenerate variance")
    r = _corr(x, y)
    if bootstrap <= 0:
        return r, (r, r)
    rng = _rng(seed)
    n = x.size
    idx = rng.integers(0, n, size=(bootstrap, n))
    xs, ys = x[idx], y[idx]
    xs = xs - xs.mean(axis=1, keepdims=True)
    ys = ys - ys.mean(axis=1, keepdims=True)
    num = np.sum(xs * ys, axis=1)
    den = np.sqrt(np.sum(xs * xs, axis=1) * np.sum(ys * ys, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        rs = num / den
    rs = rs[np.isfinite(rs)]
    lo, hi = np.percentile(rs, [2.5, 97.5])
    return r, (float(lo), float(hi))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    ci95: tuple[float, float]
    points: tuple[tuple[float, float], ...]


def _ls(lx: np.ndarray, ly: np.ndarray):
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[0]), float(coef[1])


def fit_exponent(points, samples=None, statistic=None, bootstrap: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> ExponentFit:
    """Least-squares slope of ``log statistic`` against ``log scale``.

    With ``samples`` (one array of trial values per point) and ``statistic`` (a
    reduction such as ``np.std``), the interval comes from resampling trials within
    each point; otherwise it is the normal interval from the regression stderr.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise ValueError("fit_exponent needs at least 3 points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("scales and statistics must be positive and finite")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = _ls(lx, ly)
    resid = ly - (slope * lx + intercept)
    dof = len(lx) - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    if samples is not None and bootstrap > 0:
        if statistic is None:
            raise ValueError("statistic is required with samples")
        rng = _rng(seed)
        boots = np.empty(bootstrap)
        arrays = [np.asarray(s, dtype=float) for s in samples]
        if len(arrays) != len(lx):
            raise ValueError("one sample array per point is required")
        for b in range(bootstrap):
            ys = []
            for s in arrays:
                ys.append(statistic(s[rng.integers(0, s.size, s.size)]))
            ys = np.asarray(ys)
            boots[b] = _ls(lx, np.log(np.maximum(ys, 1e-300)))[0]
        lo, hi = np.percentile(boots, [2.5, 97.5])
        ci = (float(lo), float(hi))
    else:
        q = stats.t.ppf(0.975, dof) if dof > 0 else 0.0
        ci = (slope - q * stderr, slope + q * stderr)
    return ExponentFit(slope, intercept, stderr, ci, tuple(map(tuple, pts.tolist())))


def central_moments(samples, k: int = 4, ddof: int = 1) -> np.ndarray:
    """Variance (unbiased by default, ``ddof=0`` for the population value) followed by
    plug-in central moments of order 3..k.

    Returns ``[mean, var, m3, ..., mk]``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("central_moments needs at least 2 samples")
    if not 2 <= k <= 4:
        raise ValueError("k must be 2, 3 or 4")
    mu = float(x.mean())
    d = x - mu
    out = [mu, float(d @ d) / (x.size - ddof)]
    for p in range(3, k + 1):
        out.append(float(np.mean(d**p)))
    return np.array(out)


def binomial_se(p, n: int):
    p = np.asarray(p, dtype=float)
    return np.sqrt(np.clip(p * (1 - p), 0, None) / n)
