"""Longest weakly-increasing chains (directed last passage percolation) on point clouds.

Chains may use horizontal and vertical links, so after sorting by ``(u, v)`` a chain
is a non-decreasing subsequence of ``v``. The patience pass uses ``bisect_right``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .geometry import PercolationPoint
from .sampling import PointCloud

BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class LppResult:
    length: int
    maximizer: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    target: PercolationPoint | None = None
    source: PercolationPoint | None = None

    def __post_init__(self):
        m = np.asarray(self.maximizer, dtype=float).reshape(-1, 2)
        m.flags.writeable = False
        object.__setattr__(self, "maximizer", m)

    def excursion(self) -> float:
        """Largest Euclidean distance from a path point to the segment source->target."""
        if self.maximizer.size == 0 or self.source is None or self.target is None:
            return 0.0
        a = np.array([self.source.u, self.source.v])
        b = np.array([self.target.u, self.target.v])
        d = b - a
        dd = float(d @ d)
        p = self.maximizer - a
        s = np.clip(p @ d / dd, 0.0, 1.0) if dd > 0 else np.zeros(len(p))
        return float(np.max(np.linalg.norm(p - s[:, None] * d, axis=1)))


@dataclass(frozen=True)
class CylinderSpec:
    """Cylinder around the space-time segment ``A -> B`` with half width ``T**nu``."""

    a_x: float
    a_t: float
    b_x: float
    b_t: float
    half_width: float
    nu: float = 2.0 / 3.0
    tau: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise ValueError("cylinder exponent nu must lie in (0, 1)")

    @classmethod
    def vertical(cls, T: float, tau: float, nu: float | None = None) -> CylinderSpec:
        """Axis from ``(0, T)`` to ``(0, T + T**tau)`` with the default ``nu = 2/3 - (1-tau)/6``."""
        nu = cylinder_nu(tau) if nu is None else nu
        return cls(0.0, T, 0.0, T + T**tau, T**nu, nu, tau)


def cylinder_nu(tau: float) -> float:
    return 2.0 / 3.0 - (1.0 - tau) / 6.0


# --- compiled kernels ------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _bisect_right(a, n, x):
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) >> 1
        if x < a[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@nb.njit(cache=True, nogil=True)
def _chain_length(u, v, su, sv, tu, tv, line):
    n = u.size
    # first index with u >= su; u is sorted
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) >> 1
        if u[mid] < su:
            lo = mid + 1
        else:
            hi = mid
    tails = np.empty(64, dtype=np.float64)
    m = 0
    for i in range(lo, n):
        ui = u[i]
        if ui > tu:
            break
        vi = v[i]
        if vi < sv or vi > tv:
            continue
        if line and ui + vi < 0.0:
            continue
        k = _bisect_right(tails, m, vi)
        if k == m:
            if m == tails.size:
                grown = np.empty(2 * m, dtype=np.float64)
                grown[:m] = tails[:m]
                tails = grown
            m += 1
        tails[k] = vi
    return m


@nb.njit(cache=True, nogil=True)
def _chain_lengths(u, v, su, sv, tus, tvs, line):
    # One sweep answers every target: after all points with u <= U are in, the
    # number of pile tails <= V is the chain length to (U, V).
    order = np.argsort(tus, kind="mergesort")
    out = np.empty(tus.size, dtype=np.int64)
    tails = np.empty(64, dtype=np.float64)
    m = 0
    q = 0
    nq = tus.size
    for i in range(u.size):
        ui = u[i]
        while q < nq and tus[order[q]] < ui:
            out[order[q]] = _bisect_right(tails, m, tvs[order[q]])
            q += 1
        if q == nq:
            break
        vi = v[i]
        if ui < su or vi < sv:
            continue
        if line and ui + vi < 0.0:
            continue
        k = _bisect_right(tails, m, vi)
        if k == m:
            if m == tails.size:
                grown = np.empty(2 * m, dtype=np.float64)
                grown[:m] = tails[:m]
                tails = grown
            m += 1
        tails[k] = vi
    while q < nq:
        out[order[q]] = _bisect_right(tails, m, tvs[order[q]])
        q += 1
    return out


@nb.njit(cache=True, nogil=True)
def _pile_values(v, idx):
    """Patience pile (1-based chain length ending at the point) for ``v[idx]``."""
    n = idx.size
    tails = np.empty(max(n, 1), dtype=np.float64)
    val = np.empty(n, dtype=np.int64)
    m = 0
    for j in range(n):
        vi = v[idx[j]]
        k = _bisect_right(tails, m, vi)
        if k == m:
            m += 1
        tails[k] = vi
        val[j] = k + 1
    return val, m


@nb.njit(cache=True, nogil=True)
def _backtrack(v, idx, val, length, leftmost):
    n = idx.size
    # CSR layout of piles, each in increasing position order
    counts = np.zeros(length + 1, dtype=np.int64)
    for j in range(n):
        counts[val[j]] += 1
    start = np.zeros(length + 2, dtype=np.int64)
    for k in range(1, length + 1):
        start[k + 1] = start[k] + counts[k]
    fill = start.copy()
    members = np.empty(n, dtype=np.int64)
    for j in range(n):
        k = val[j]
        members[fill[k]] = j
        fill[k] += 1
    path = np.empty(length, dtype=np.int64)
    if leftmost:
        cur = members[start[length]]
    else:
        cur = members[start[length + 1] - 1]
    path[length - 1] = cur
    for k in range(length - 1, 0, -1):
        a, b = start[k], start[k + 1]
        vc = v[idx[cur]]
        if leftmost:
            # v strictly decreases along a pile: first member with v <= vc
            lo, hi = a, b
            while lo < hi:
                mid = (lo + hi) >> 1
                if v[idx[members[mid]]] <= vc:
                    hi = mid
                else:
                    lo = mid + 1
            cur = members[lo]
        else:
            lo, hi = a, b
            while lo < hi:
                mid = (lo + hi) >> 1
                if members[mid] < cur:
                    lo = mid + 1
                else:
                    hi = mid
            cur = members[lo - 1]
        path[k - 1] = cur
    return path


# --- public API ------------------------------------------------------------------


def _as_point(p) -> PercolationPoint:
    if isinstance(p, PercolationPoint):
        return p
    a, b = p
    return PercolationPoint(float(a), float(b))


def _check_order(source: PercolationPoint, target: PercolationPoint) -> None:
    if not source.dominated_by(target):
        raise ValueError(f"source {source} is not dominated by target {target}")


def _rect_indices(cloud: PointCloud, source: PercolationPoint | None, target: PercolationPoint) -> np.ndarray:
    lo = 0 if source is None else int(np.searchsorted(cloud.u, source.u, side="left"))
    hi = int(np.searchsorted(cloud.u, target.u, side="right"))
    u, v = cloud.u[lo:hi], cloud.v[lo:hi]
    keep = v <= target.v
    if source is None:
        keep &= u + v >= 0.0
    else:
        keep &= v >= source.v
    return lo + np.flatnonzero(keep)


def longest_chain(cloud: PointCloud, source, target, path: bool = False) -> LppResult:
    """Length of the longest chain inside the closed rectangle ``[source, target]``.

    The maximizer is only recovered when ``path`` is set (leftmost rule); otherwise
    the result carries an empty one.
    """
    source, target = _as_point(source), _as_point(target)
    _check_order(source, target)
    if path:
        return maximizer_path(cloud, source, target)
    if len(cloud) == 0:
        return LppResult(0, target=target, source=source)
    n = _chain_length(cloud.u, cloud.v, source.u, source.v, target.u, target.v, False)
    return LppResult(int(n), target=target, source=source)


def longest_chain_line_to_point(cloud: PointCloud, target) -> LppResult:
    """Longest chain started anywhere on ``{u + v = 0}`` and ending below ``target``."""
    target = _as_point(target)
    if len(cloud) == 0:
        return LppResult(0, target=target)
    n = _chain_length(cloud.u, cloud.v, -math.inf, -math.inf, target.u, target.v, True)
    return LppResult(int(n), target=target)


def chain_lengths(cloud: PointCloud, targets_u, targets_v, source=(0.0, 0.0), line: bool = False) -> np.ndarray:
    """Point-to-point (or line-to-point) lengths to many targets on one shared cloud.

    All targets are answered by a single patience sweep, so the cost is
    ``O((n + m) log n)`` for ``n`` points and ``m`` targets.
    """
    tus = np.ascontiguousarray(targets_u, dtype=np.float64).ravel()
    tvs = np.ascontiguousarray(targets_v, dtype=np.float64).ravel()
    if len(cloud) == 0:
        return np.zeros(tus.size, dtype=np.int64)
    if line:
        su = sv = -math.inf
    else:
        s = _as_point(source)
        if np.any(tus < s.u) or np.any(tvs < s.v):
            raise ValueError("every target must dominate the source")
        su, sv = s.u, s.v
    return _chain_lengths(cloud.u, cloud.v, su, sv, tus, tvs, line)


def maximizer_path(cloud: PointCloud, source, target, rule: str = "leftmost") -> LppResult:
    """One maximizer, picked deterministically by backtracking.

    ``rule="leftmost"`` takes, at every step back from the target, the admissible
    predecessor with the smallest ``u`` (then ``v``); ``"rightmost"`` the largest.
    ``source=None`` gives the line-to-point maximizer.
    """
    if rule not in ("leftmost", "rightmost"):
        raise ValueError(f"unknown rule {rule!r}")
    target = _as_point(target)
    if source is not None:
        source = _as_point(source)
        _check_order(source, target)
    idx = _rect_indices(cloud, source, target)
    if idx.size == 0:
        return LppResult(0, target=target, source=source)
    val, length = _pile_values(cloud.v, idx)
    path = _backtrack(cloud.v, idx, val, length, rule == "leftmost")
    pts = np.column_stack([cloud.u[idx[path]], cloud.v[idx[path]]])
    return LppResult(int(length), pts, target=target, source=source)


def chain_values(cloud: PointCloud, source=None, target=None) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the points in ``[source, target]`` and their pile values.

    Missing corners are unbounded; the pile value of a point is the longest chain
    ending at it.
    """
    lo = PercolationPoint(-math.inf, -math.inf) if source is None else _as_point(source)
    hi = PercolationPoint(math.inf, math.inf) if target is None else _as_point(target)
    idx = _rect_indices(cloud, lo, hi)
    if idx.size == 0:
        return idx, np.empty(0, dtype=np.int64)
    val, _ = _pile_values(cloud.v, idx)
    return idx, val


def crosses_cylinder(path: LppResult, cyl: CylinderSpec) -> bool:
    """True when a path point in the cylinder's time span lies farther than the half width from its axis."""
    if path.maximizer.size == 0:
        return False
    u, v = path.maximizer[:, 0], path.maximizer[:, 1]
    x, t = 0.5 * (u - v), 0.5 * (u + v)
    t0, t1 = sorted((cyl.a_t, cyl.b_t))
    inside = (t >= t0) & (t <= t1)
    if not np.any(inside):
        return False
    dt = cyl.b_t - cyl.a_t
    slope = (cyl.b_x - cyl.a_x) / dt if dt != 0 else 0.0
    axis_x = cyl.a_x + slope * (t[inside] - cyl.a_t)
    # perpendicular distance to the axis line
    dist = np.abs(x[inside] - axis_x) / math.sqrt(1.0 + slope * slope)
    return bool(np.any(dist > cyl.half_width))


def path_position_at_time(path: LppResult, t_query: float) -> float:
    """Space coordinate where the piecewise-linear path crosses time ``t_query``.

    The polyline runs source -> maximizer points -> target; with no source (line to
    point) it starts at the first point.
    """
    pts = [path.maximizer]
    if path.source is not None:
        pts.insert(0, np.array([[path.source.u, path.source.v]]))
    if path.target is not None:
        pts.append(np.array([[path.target.u, path.target.v]]))
    poly = np.concatenate(pts)
    s = poly[:, 0] + poly[:, 1]  # 2t, non-decreasing along the polyline
    target_s = 2.0 * t_query
    k = int(np.searchsorted(s, target_s, side="left"))
    if k == 0:
        p = poly[0]
        return 0.5 * (p[0] - p[1])
    if k >= len(poly):
        p = poly[-1]
        return 0.5 * (p[0] - p[1])
    a, b = poly[k - 1], poly[k]
    w = 0.0 if s[k] == s[k - 1] else (target_s - s[k - 1]) / (s[k] - s[k - 1])
    p = a + w * (b - a)
    return 0.5 * (p[0] - p[1])


def brute_force_chain(cloud: PointCloud, source, target) -> int:
    """Exact longest chain by dynamic programming over the full domination DAG.

    ``source=None`` means line-to-point. Limited to ``BRUTE_FORCE_LIMIT`` points in
    the feasible set.
    """
    target = _as_point(target)
    pts = [(float(a), float(b)) for a, b in zip(cloud.u, cloud.v)]
    if source is None:
        feas = [p for p in pts if p[0] <= target.u and p[1] <= target.v and p[0] + p[1] >= 0]
    else:
        source = _as_point(source)
        _check_order(source, target)
        feas = [p for p in pts if source.u <= p[0] <= target.u and source.v <= p[1] <= target.v]
    if len(feas) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} points, got {len(feas)}")
    n = len(feas)
    # i -> j edge when p_i <= p_j componentwise; equal points ordered by index
    best = [1] * n
    order = sorted(range(n), key=lambda i: (feas[i][0] + feas[i][1], i))
    rank = {i: r for r, i in enumerate(order)}
    for j in order:
        for i in range(n):
            if i == j:
                continue
            pi, pj = feas[i], feas[j]
            if rank[i] < rank[j] and pi[0] <= pj[0] and pi[1] <= pj[1]:
                best[j] = max(best[j], best[i] + 1)
    return max(best, default=0)
