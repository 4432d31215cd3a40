"""Seeded Poisson sampling in space-time regions.

Every trial draws from its own counter-based stream: a Philox-4x64 generator whose
128-bit key packs ``(seed, stream_index)``. The stream therefore depends only on
those two integers, never on how trials are scheduled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_index"):
            val = getattr(self, name)
            if not 0 <= val <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {val}")

    @property
    def key(self) -> int:
        return (self.stream_index << 64) | self.seed

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key))


def substream(seed: int, trial: int) -> RngStream:
    """Stream for trial ``trial`` of an experiment with master seed ``seed``."""
    return RngStream(seed & _MASK64, trial)


# --- regions (percolation coordinates) -------------------------------------------


@dataclass(frozen=True)
class Rect:
    u_min: float
    u_max: float
    v_min: float
    v_max: float

    @property
    def area(self) -> float:
        return max(self.u_max - self.u_min, 0.0) * max(self.v_max - self.v_min, 0.0)

    def contains(self, u, v):
        return (u >= self.u_min) & (u <= self.u_max) & (v >= self.v_min) & (v <= self.v_max)


@dataclass(frozen=True)
class DropletCone:
    """The cone ``{|x| <= t <= T}``: the triangle ``u, v >= 0, u + v <= 2T``."""

    T: float

    @property
    def area(self) -> float:
        return 2.0 * self.T * self.T

    def contains(self, u, v):
        return (u >= 0) & (v >= 0) & (u + v <= 2.0 * self.T)


@dataclass(frozen=True)
class Strip:
    """Band ``|x| <= half_width`` around the time axis, clipped to ``[0,u_max]x[0,v_max]``."""

    half_width: float
    u_max: float
    v_max: float

    @property
    def area(self) -> float:
        # |u - v| <= 2w inside the rectangle
        a, b, w2 = self.u_max, self.v_max, 2.0 * self.half_width
        return a * b - _corner_triangle(a, b, w2) - _corner_triangle(b, a, w2)

    def contains(self, u, v):
        return (u >= 0) & (v >= 0) & (u <= self.u_max) & (v <= self.v_max) & (
            np.abs(u - v) <= 2.0 * self.half_width
        )


def _corner_triangle(a: float, b: float, w2: float) -> float:
    """Area of ``{u - v > w2}`` inside ``[0,a]x[0,b]``."""
    if a <= w2:
        return 0.0
    s = a - w2
    if s <= b:
        return 0.5 * s * s
    return 0.5 * (s + (s - b)) * b


@dataclass(frozen=True)
class LineToPoint:
    """Triangle between the line ``{u + v = 0}`` and the target corner ``(U, V)``."""

    U: float
    V: float

    def __post_init__(self):
        if self.U + self.V < 0:
            raise ValueError("line-to-point target must satisfy U + V >= 0")

    @property
    def area(self) -> float:
        return 0.5 * (self.U + self.V) ** 2

    def contains(self, u, v):
        return (u <= self.U) & (v <= self.V) & (u + v >= 0)


Region = Rect | DropletCone | Strip | LineToPoint


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Poisson points sorted by ``u``, ties broken by ``v``; arrays are read-only."""

    u: np.ndarray
    v: np.ndarray
    region: Region | None = None
    intensity: float = 1.0
    seed: int | None = None
    stream_index: int | None = None

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError("u and v must be 1-d arrays of equal length")
        if u.size > 1 and not _is_sorted(u, v):
            order = np.lexsort((v, u))
            u, v = u[order], v[order]
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return self.u.size

    @classmethod
    def from_points(cls, points, **kw) -> PointCloud:
        arr = np.asarray(list(points), dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], **kw)

    def points(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    def restrict(self, mask) -> PointCloud:
        return PointCloud(self.u[mask], self.v[mask], self.region, self.intensity, self.seed, self.stream_index)

    def spacetime(self) -> tuple[np.ndarray, np.ndarray]:
        return 0.5 * (self.u - self.v), 0.5 * (self.u + self.v)

    def to_csv(self, path: str | Path) -> None:
        write_cloud_csv(self, path)


def _is_sorted(u: np.ndarray, v: np.ndarray) -> bool:
    du = np.diff(u)
    if np.any(du < 0):
        return False
    ties = du == 0
    return not np.any(ties & (np.diff(v) < 0))


def _sorted_uniforms(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """Order statistics of ``n`` uniforms on ``[lo, hi]`` via exponential spacings."""
    if n == 0:
        return np.empty(0)
    s = np.cumsum(rng.standard_exponential(n + 1))
    return lo + (hi - lo) * (s[:-1] / s[-1])


def sample_region(region: Region, intensity: float, stream: RngStream) -> PointCloud:
    if not intensity > 0:
        raise ValueError("intensity must be positive")
    area = region.area
    if not math.isfinite(area):
        raise ValueError("region must have finite area")
    rng = stream.generator()
    n = int(rng.poisson(intensity * area)) if area > 0 else 0
    kw = dict(region=region, intensity=intensity, seed=stream.seed, stream_index=stream.stream_index)
    if n == 0:
        return PointCloud(np.empty(0), np.empty(0), **kw)

    if isinstance(region, Rect):
        u = _sorted_uniforms(rng, n, region.u_min, region.u_max)
        v = rng.uniform(region.v_min, region.v_max, n)
    elif isinstance(region, DropletCone):
        two_t = 2.0 * region.T
        a, b = rng.random(n), rng.random(n)
        flip = a + b > 1.0
        a[flip], b[flip] = 1.0 - a[flip], 1.0 - b[flip]
        u, v = two_t * a, two_t * b
    elif isinstance(region, LineToPoint):
        a, b = rng.random(n), rng.random(n)
        flip = a + b > 1.0
        a[flip], b[flip] = 1.0 - a[flip], 1.0 - b[flip]
        U, V = region.U, region.V
        # corners (U,V), (-V,V), (U,-U)
        u = U - a * (U + V)
        v = V - b * (U + V)
    elif isinstance(region, Strip):
        u, v = _sample_strip(rng, n, region)
    else:  # pragma: no cover
        raise TypeError(f"unknown region {region!r}")
    return PointCloud(u, v, **kw)


def _sample_strip(rng: np.random.Generator, n: int, region: Strip):
    # n uniform points in the band: draw in an enclosing (s, d) box and thin by rejection
    w2 = 2.0 * region.half_width
    s_max = region.u_max + region.v_max
    out_u, out_v = [], []
    got = 0
    while got < n:
        m = max(2 * (n - got), 64)
        s = rng.uniform(0.0, s_max, m)
        d = rng.uniform(-w2, w2, m)
        u, v = 0.5 * (s + d), 0.5 * (s - d)
        keep = (u >= 0) & (v >= 0) & (u <= region.u_max) & (v <= region.v_max)
        u, v = u[keep][: n - got], v[keep][: n - got]
        out_u.append(u)
        out_v.append(v)
        got += u.size
    return np.concatenate(out_u), np.concatenate(out_v)


def sample_line_steps(stream: RngStream, half_width: float, density: float = 1.0):
    """Independent Poisson up- and down-step positions on ``[-half_width, half_width]``."""
    rng = stream.generator()
    length = 2.0 * half_width
    n_up = int(rng.poisson(density * length))
    up = np.sort(rng.uniform(-half_width, half_width, n_up))
    n_down = int(rng.poisson(density * length))
    down = np.sort(rng.uniform(-half_width, half_width, n_down))
    return up, down


def write_cloud_csv(cloud: PointCloud, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v"])
        for a, b in zip(cloud.u, cloud.v):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])


def read_cloud_csv(path: str | Path) -> PointCloud:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if [h.strip() for h in header] != ["u", "v"]:
            raise ValueError(f"{path}: expected header 'u,v', got {header}")
        rows = [(float(a), float(b)) for a, b in r]
    return PointCloud.from_points(rows)
