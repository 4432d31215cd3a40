"""PNG surface dynamics: an event-driven engine and fast LPP-based backends.

Internally a step is identified by its light-line anchor. An up-step born at
``(x0, t0)`` sits at ``x0 - (t - t0)``, so ``a = x0 + t0`` is constant along its world
line; a down-step keeps ``b = x0 - t0``. In percolation coordinates ``a = u`` and
``b = -v``: the up-step of a nucleation travels on the vertical line through the
Poisson point, the down-step on the horizontal one. A down-step ``b`` and an up-step
``a`` meet at ``t = (a - b)/2``, ``x = (a + b)/2``, i.e. at percolation point ``(a, -b)``.

Heights use the closed convention ``h(x) = left + #{up-steps at <= x} - #{down-steps
at < x}``, which is what makes ``h(x, t) = L((0,0), (x+t, t-x))`` hold with closed
rectangles.

Multilayer runs follow the rule that a collision at level ``l`` nucleates level
``l - 1`` at the merge point, inserted immediately after the merging. Simultaneous
collisions are processed left to right. After every event the simulator asserts
strict ordering of the affected lines at the event point; between events the order
cannot change (same-level steps never cross, and crossings of opposite steps on
different levels preserve it), so this covers all times.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .geometry import SpaceTimePoint, hyperbola_points
from .lpp import _pile_values, chain_lengths
from .sampling import DropletCone, LineToPoint, PointCloud, Rect, RngStream, _sorted_uniforms, sample_region

_NEG = -math.inf
_POS = math.inf


class OrderingViolation(AssertionError):
    """Two multilayer lines touched or crossed."""


@dataclass(frozen=True)
class NucleationEvent:
    x: float
    t: float
    level: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("nucleation time must be non-negative")
        if self.level > 0:
            raise ValueError("levels are non-positive")


@dataclass(frozen=True, eq=False)
class StepConfiguration:
    """Snapshot of one line: sorted step positions at ``time`` inside ``window``."""

    time: float
    up_steps: np.ndarray
    down_steps: np.ndarray
    left_height: int
    window: tuple[float, float]
    collisions: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        lo, hi = self.window
        if not lo < hi:
            raise ValueError("window must be a non-empty interval")
        up = np.sort(np.asarray(self.up_steps, dtype=float))
        down = np.sort(np.asarray(self.down_steps, dtype=float))
        for arr in (up, down):
            if arr.size and (arr[0] <= lo or arr[-1] >= hi):
                raise ValueError("step positions must lie strictly inside the window")
            arr.flags.writeable = False
        object.__setattr__(self, "up_steps", up)
        object.__setattr__(self, "down_steps", down)
        object.__setattr__(self, "left_height", int(self.left_height))
        object.__setattr__(self, "window", (float(lo), float(hi)))
        col = np.asarray(self.collisions, dtype=float).reshape(-1, 2)
        col.flags.writeable = False
        object.__setattr__(self, "collisions", col)

    @classmethod
    def flat(cls, window=(-1.0, 1.0), level: int = 0, time: float = 0.0) -> StepConfiguration:
        return cls(time, np.empty(0), np.empty(0), level, window)

    def height(self, x):
        x = np.asarray(x, dtype=float)
        h = (
            self.left_height
            + np.searchsorted(self.up_steps, x, side="right")
            - np.searchsorted(self.down_steps, x, side="left")
        )
        return int(h) if h.ndim == 0 else h


# --- event-driven engine ---------------------------------------------------------


class _Layer:
    """Steps of one level as sorted ``(anchor, id)`` lists."""

    __slots__ = ("ups", "downs", "left", "nucleations", "collisions")

    def __init__(self, left: int):
        self.ups: list[tuple[float, int]] = []
        self.downs: list[tuple[float, int]] = []
        self.left = left
        self.nucleations = 0
        self.collisions: list[tuple[float, float]] = []

    @staticmethod
    def _alive(lst, key) -> bool:
        i = bisect_left(lst, key)
        return i < len(lst) and lst[i] == key

    def neighbours(self, a: float, b: float, t: float):
        """Nearest steps strictly left and right of the point with anchors ``(a, b)``.

        Each side is ``(kind, entry)`` with kind ``'u'``/``'d'``, or ``None``. An up and
        a down at the same position are ordered as they will be an instant later:
        up first (a fresh pair moving apart).
        """
        iu = bisect_left(self.ups, (a, -1))
        idn = bisect_left(self.downs, (b, -1))
        lu = self.ups[iu - 1] if iu > 0 else None
        ld = self.downs[idn - 1] if idn > 0 else None
        if lu is None or (ld is not None and ld[0] + t >= lu[0] - t):
            left = ("d", ld) if ld is not None else None
        else:
            left = ("u", lu)
        ju = bisect_right(self.ups, (a, _POS))
        jd = bisect_right(self.downs, (b, _POS))
        ru = self.ups[ju] if ju < len(self.ups) else None
        rd = self.downs[jd] if jd < len(self.downs) else None
        if ru is None or (rd is not None and rd[0] + t < ru[0] - t):
            right = ("d", rd) if rd is not None else None
        else:
            right = ("u", ru)
        return left, right

    def heights_at(self, a: float, b: float) -> tuple[int, int, int]:
        """Left limit, closed value and right limit of the height at anchors ``(a, b)``."""
        lt_a = bisect_left(self.ups, (a, -1))
        le_a = bisect_right(self.ups, (a, _POS))
        lt_b = bisect_left(self.downs, (b, -1))
        le_b = bisect_right(self.downs, (b, _POS))
        return self.left + lt_a - lt_b, self.left + le_a - lt_b, self.left + le_a - le_b

    def height(self, x: float, t: float) -> int:
        return (
            self.left
            + bisect_right(self.ups, (x + t, _POS))
            - bisect_left(self.downs, (x - t, -1))
        )

    def purge(self, t: float, lo: float, hi: float) -> None:
        ups, downs = self.ups, self.downs
        k = 0
        while k < len(ups) and ups[k][0] - t <= lo:
            k += 1
        if k:
            del ups[:k]
            self.left += k
        k = len(downs)
        while k > 0 and downs[k - 1][0] + t >= hi:
            k -= 1
        del downs[k:]

    def snapshot(self, t: float, window) -> StepConfiguration:
        up = np.array([e[0] for e in self.ups], dtype=float) - t
        down = np.array([e[0] for e in self.downs], dtype=float) + t
        return StepConfiguration(t, up, down, self.left, window, np.array(self.collisions, dtype=float))


class _Engine:
    """Global event queue over levels ``0, -1, ..., -depth``."""

    def __init__(self, layers: list[_Layer], window, t0: float, check: str = "local"):
        self.layers = layers
        self.window = (float(window[0]), float(window[1]))
        self.time = t0
        self.heap: list = []
        self.seq = 0
        self.next_id = 0
        self.check = check
        self.events_processed = 0

    def new_id(self) -> int:
        self.next_id += 1
        return self.next_id

    def push(self, t: float, kind: int, x: float, level: int, payload) -> None:
        # ties: collisions (kind 0) before nucleations (kind 1), then left to right
        self.seq += 1
        heapq.heappush(self.heap, (t, kind, x, self.seq, level, payload))

    def push_nucleation(self, a: float, b: float, level: int) -> None:
        t, x = 0.5 * (a - b), 0.5 * (a + b)
        self.push(t, 1, x, level, (a, b))

    def _schedule(self, level: int, down, up) -> None:
        b, a = down[0], up[0]
        self.push(0.5 * (a - b), 0, 0.5 * (a + b), level, (down, up))

    def _nucleate(self, level: int, a: float, b: float, t: float) -> None:
        layer = self.layers[-level]
        left, right = layer.neighbours(a, b, t)
        up, down = (a, self.new_id()), (b, self.new_id())
        insort(layer.ups, up)
        insort(layer.downs, down)
        layer.nucleations += 1
        if left is not None and left[0] == "d":
            self._schedule(level, left[1], up)
        if right is not None and right[0] == "u":
            self._schedule(level, down, right[1])
        self._verify(level, a, b)

    def _collide(self, level: int, down, up, t: float, x: float) -> None:
        layer = self.layers[-level]
        if not (layer._alive(layer.downs, down) and layer._alive(layer.ups, up)):
            return
        layer.downs.remove(down)
        layer.ups.remove(up)
        a, b = up[0], down[0]
        layer.collisions.append((x, t))
        left, right = layer.neighbours(a, b, t)
        if left is not None and right is not None and left[0] == "d" and right[0] == "u":
            self._schedule(level, left[1], right[1])
        self._verify(level, a, b)
        if -level + 1 < len(self.layers):
            self.push_nucleation(a, b, level - 1)

    def _verify(self, level: int, a: float, b: float) -> None:
        if self.check == "none":
            return
        k = -level
        here = self.layers[k].heights_at(a, b)
        if k > 0:
            above = self.layers[k - 1].heights_at(a, b)
            if any(h_up <= h for h_up, h in zip(above, here)):
                raise OrderingViolation(f"line {level + 1} not above line {level} at anchors {(a, b)}")
        if k + 1 < len(self.layers):
            below = self.layers[k + 1].heights_at(a, b)
            if any(h <= h_lo for h, h_lo in zip(here, below)):
                raise OrderingViolation(f"line {level} not above line {level - 1} at anchors {(a, b)}")
        if self.check == "full":
            self.verify_all(0.5 * (a - b))

    def verify_all(self, t: float) -> None:
        """Compare adjacent lines on every open interval between step positions.

        Exact step positions are left to the anchor-exact local check: recomputing
        them from ``t`` is not reliable to the last bit.
        """
        for k in range(len(self.layers) - 1):
            hi_l, lo_l = self.layers[k], self.layers[k + 1]
            xs = sorted(
                [e[0] - t for L in (hi_l, lo_l) for e in L.ups]
                + [e[0] + t for L in (hi_l, lo_l) for e in L.downs]
            )
            probes = [self.window[0] if not xs else xs[0] - 1.0]
            probes += [0.5 * (p + q) for p, q in zip(xs, xs[1:]) if q - p > 1e-9]
            if xs:
                probes.append(xs[-1] + 1.0)
            for x in probes:
                if hi_l.height(x, t) <= lo_l.height(x, t):
                    raise OrderingViolation(f"lines {-k} and {-k - 1} touch at x={x}, t={t}")

    def advance(self, t_end: float) -> None:
        lo, hi = self.window
        heap = self.heap
        while heap and heap[0][0] <= t_end:
            t, kind, x, _, level, payload = heapq.heappop(heap)
            self.time = t
            # heights do not depend on when exited steps are dropped, so only the
            # level being touched is cleaned
            self.layers[-level].purge(t, lo, hi)
            if kind == 0:
                self._collide(level, payload[0], payload[1], t, x)
            else:
                if not lo < x < hi:
                    raise ValueError(f"nucleation at x={x} outside window {self.window}")
                self._nucleate(level, payload[0], payload[1], t)
            self.events_processed += 1
        self.time = max(self.time, t_end)
        for layer in self.layers:
            layer.purge(self.time, lo, hi)


def _check_events(events: Sequence[NucleationEvent], t_start: float, window) -> None:
    lo, hi = window
    last = t_start
    for ev in events:
        if ev.t < last:
            raise ValueError("nucleation events must be sorted by time and not precede the initial state")
        if not lo < ev.x < hi:
            raise ValueError(f"nucleation at x={ev.x} outside window {window}")
        last = ev.t


def _as_events(events) -> list[NucleationEvent]:
    out = []
    for ev in events:
        out.append(ev if isinstance(ev, NucleationEvent) else NucleationEvent(float(ev[0]), float(ev[1])))
    return out


def _load_layer(engine: _Engine, cfg: StepConfiguration, level: int) -> _Layer:
    layer = _Layer(cfg.left_height)
    t0 = cfg.time
    layer.ups = sorted((float(p) + t0, engine.new_id()) for p in cfg.up_steps)
    layer.downs = sorted((float(p) - t0, engine.new_id()) for p in cfg.down_steps)
    return layer


def _schedule_initial(engine: _Engine, level: int) -> None:
    # every adjacent (down, up) pair in the merged order is a pending collision
    layer = engine.layers[-level]
    t = engine.time
    merged = sorted([(e[0] - t, "u", e) for e in layer.ups] + [(e[0] + t, "d", e) for e in layer.downs])
    for (_, k1, e1), (_, k2, e2) in zip(merged, merged[1:]):
        if k1 == "d" and k2 == "u":
            engine._schedule(level, e1, e2)


def evolve_surface(initial: StepConfiguration, events: Iterable, t_end: float) -> StepConfiguration:
    """Run one PNG line from ``initial`` to ``t_end`` with the given level-0 nucleations.

    Collisions are recorded in the result's ``collisions`` array as ``(x, t)`` rows.
    """
    events = _as_events(events)
    _check_events(events, initial.time, initial.window)
    if t_end < initial.time:
        raise ValueError("t_end precedes the initial time")
    engine = _Engine([], initial.window, initial.time, check="none")
    engine.layers.append(_load_layer(engine, initial, 0))
    _schedule_initial(engine, 0)
    for ev in events:
        if ev.t <= t_end:
            engine.push_nucleation(ev.x + ev.t, ev.x - ev.t, 0)
    engine.advance(t_end)
    return engine.layers[0].snapshot(engine.time, engine.window)


@dataclass(frozen=True, eq=False)
class MultilayerState:
    time: float
    layers: tuple[StepConfiguration, ...]
    nucleation_counts: tuple[int, ...]
    collision_counts: tuple[int, ...]
    events_processed: int = 0

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    def heights(self, x) -> np.ndarray:
        """Heights of all lines at ``x``, top line first."""
        return np.array([layer.height(x) for layer in self.layers])

    def check_ordering(self) -> None:
        for k in range(self.depth):
            hi, lo = self.layers[k], self.layers[k + 1]
            xs = np.sort(np.concatenate([hi.up_steps, hi.down_steps, lo.up_steps, lo.down_steps]))
            gaps = np.diff(xs) > 1e-9
            probes = 0.5 * (xs[1:] + xs[:-1])[gaps]
            ends = [xs[0] - 1.0, xs[-1] + 1.0] if xs.size else [hi.window[0] + 0.5 * (hi.window[1] - hi.window[0])]
            probes = np.concatenate([probes, ends])
            if np.any(hi.height(probes) <= lo.height(probes)):
                raise OrderingViolation(f"lines {-k} and {-k - 1} are not strictly ordered")


class MultilayerSimulator:
    """Incremental multilayer run; ``advance`` to a time, then read heights."""

    def __init__(self, events: Iterable, depth: int, window=None, check: str = "local"):
        if depth < 0:
            raise ValueError("depth must be non-negative")
        events = _as_events(events)
        if window is None:
            reach = max((abs(ev.x) + ev.t for ev in events), default=0.0)
            t_max = max((ev.t for ev in events), default=0.0)
            window = (-(reach + t_max + 1.0), reach + t_max + 1.0)
        if any(ev.level != 0 for ev in events):
            raise ValueError("only level-0 nucleations are accepted as input")
        _check_events(events, 0.0, window)
        self.engine = _Engine([_Layer(-k) for k in range(depth + 1)], window, 0.0, check)
        for ev in events:
            self.engine.push_nucleation(ev.x + ev.t, ev.x - ev.t, 0)

    @property
    def time(self) -> float:
        return self.engine.time

    def advance(self, t: float) -> None:
        if t < self.engine.time:
            raise ValueError("cannot move backwards in time")
        self.engine.advance(t)

    def heights(self, x: float) -> np.ndarray:
        t = self.engine.time
        return np.array([layer.height(x, t) for layer in self.engine.layers])

    def state(self) -> MultilayerState:
        e = self.engine
        return MultilayerState(
            e.time,
            tuple(layer.snapshot(e.time, e.window) for layer in e.layers),
            tuple(layer.nucleations for layer in e.layers),
            tuple(len(layer.collisions) for layer in e.layers),
            e.events_processed,
        )


def evolve_multilayer(events: Iterable, t_end: float, depth: int, window=None, check: str = "local") -> MultilayerState:
    """Multilayer PNG from ``h_l = l`` with the given level-0 nucleations."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    sim = MultilayerSimulator(events, depth, window, check)
    sim.advance(t_end)
    return sim.state()


def cloud_events(cloud: PointCloud, t_max: float = math.inf) -> list[NucleationEvent]:
    """Nucleations of a percolation cloud in time order."""
    x, t = cloud.spacetime()
    order = np.lexsort((x, t))
    return [NucleationEvent(float(x[i]), float(t[i])) for i in order if t[i] <= t_max]


# --- output records ---------------------------------------------------------------


@dataclass(frozen=True)
class EtaSample:
    location: SpaceTimePoint
    occupied_levels: frozenset

    def __post_init__(self):
        object.__setattr__(self, "occupied_levels", frozenset(int(j) for j in self.occupied_levels))


def eta_readout(state: MultilayerState, locations: Iterable) -> list[EtaSample]:
    out = []
    for loc in locations:
        p = loc if isinstance(loc, SpaceTimePoint) else SpaceTimePoint(*map(float, loc))
        if not math.isclose(p.t, state.time, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"location time {p.t} differs from state time {state.time}")
        lo, hi = state.layers[0].window
        if not lo < p.x < hi:
            raise ValueError(f"location x={p.x} outside window")
        out.append(EtaSample(p, frozenset(state.heights(p.x).tolist())))
    return out


# --- smoothed step -----------------------------------------------------------------


@dataclass(frozen=True)
class SmoothedStep:
    """Smooth monotone step, 0 below ``-M`` and 1 above ``M``."""

    M: float = 2.0

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")

    def _n(self, x):
        x = np.asarray(x, dtype=float)
        s = x + self.M
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self._n(x), self._n(-x)
        # a + b > 0 everywhere: at least one of x + M, M - x is positive
        out = a / (a + b)
        return float(out) if out.ndim == 0 else out

    def derivative_bound(self, n: int = 20001) -> float:
        xs = np.linspace(-self.M, self.M, n)
        return float(np.max(np.abs(np.gradient(self(xs), xs))))

    def scaled(self, j, T: float):
        """``f_T(j) = f((j - 2T) / T**(1/3))``."""
        return self((np.asarray(j, dtype=float) - 2.0 * T) / np.cbrt(T))

    def zone(self, T: float) -> tuple[float, float]:
        c = np.cbrt(T)
        return 2.0 * T - self.M * c, 2.0 * T + self.M * c


class InsufficientDepth(RuntimeError):
    pass


def default_depth(T: float, M: float = 2.0) -> int:
    c = T ** (1.0 / 3.0)
    return int(math.ceil(4.0 * c) + M * math.ceil(c))


def eta_smoothed_from_heights(heights: np.ndarray, f: SmoothedStep, T: float, strict: bool = True) -> float:
    """``sum_j f_T(j) eta(j)`` for the given line heights (top first).

    With ``strict`` the lowest line must sit where ``f_T = 0``, otherwise unsimulated
    lines below it could still contribute; ``strict=False`` returns the raw sum.
    """
    heights = np.asarray(heights)
    if strict and f.scaled(heights.min(), T) > 0.0:
        raise InsufficientDepth(
            f"lowest simulated line at {heights.min()} lies in the transition zone {f.zone(T)}; raise depth"
        )
    return float(np.sum(f.scaled(heights, T)))


def eta_smoothed(state, u: float, f: SmoothedStep, T: float, curve: str = "level") -> float:
    """Smoothed functional at the hyperbola point with angle ``u * T**(-1/3)``.

    ``state`` is either a :class:`MultilayerState` taken at that point's time, or a
    callable ``(x, t) -> heights`` (e.g. the shadow backend on one cloud). The default
    ``curve="level"`` uses ``t**2 - x**2 = T**2``, along which the macroscopic height
    stays at ``2T`` and the smoothing window ``f_T`` is centred on the top line.
    """
    x, t = hyperbola_points(T, u, curve=curve)
    x, t = float(x), float(t)
    if isinstance(state, MultilayerState):
        if not math.isclose(t, state.time, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError("state time does not match the hyperbola point")
        h = state.heights(x)
    else:
        h = state(x, t)
    return eta_smoothed_from_heights(h, f, T)


# --- fast backends ------------------------------------------------------------------


def _targets(x, t):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x, t = np.broadcast_arrays(x, t)
    return x + t, t - x


def droplet_heights(cloud: PointCloud, x, t) -> np.ndarray:
    """``h(x, t) = L((0,0), (x+t, t-x))`` on a droplet cloud."""
    tu, tv = _targets(x, t)
    if np.any((tu < 0) | (tv < 0)):
        raise ValueError("droplet query outside the cone |x| <= t")
    return chain_lengths(cloud, tu, tv)


def flat_heights(cloud: PointCloud, x, t) -> np.ndarray:
    tu, tv = _targets(x, t)
    if np.any(tu + tv < 0):
        raise ValueError("flat query needs t >= 0")
    return chain_lengths(cloud, tu, tv, line=True)


def _events_heights(sim_factory, x, t):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(t, kind="mergesort")
    out = np.empty(x.size, dtype=np.int64)
    sim = sim_factory(float(t.max()) if t.size else 0.0)
    for i in order:
        sim.advance(float(t[i]))
        out[i] = sim.heights(float(x[i]))[0]
    return out


def droplet_heights_events(cloud: PointCloud, x, t) -> np.ndarray:
    """Same as :func:`droplet_heights` through the event-driven dynamics."""
    tu, tv = _targets(x, t)
    if np.any((tu < 0) | (tv < 0)):
        raise ValueError("droplet query outside the cone |x| <= t")
    if len(cloud) and (np.any(cloud.u < 0) or np.any(cloud.v < 0)):
        raise ValueError("droplet cloud must lie in u, v >= 0")
    return _events_heights(lambda t_max: MultilayerSimulator(cloud_events(cloud, t_max), 0), x, t)


def flat_heights_events(cloud: PointCloud, x, t) -> np.ndarray:
    def factory(t_max):
        ev = cloud_events(cloud.restrict(cloud.u + cloud.v >= 0), t_max)
        return MultilayerSimulator(ev, 0)

    return _events_heights(factory, x, t)


def _check_droplet_queries(T, x, t):
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(np.abs(x) > t) or np.any(t > T) or np.any(t < 0):
        raise ValueError("droplet queries must satisfy |x| <= t <= T")
    return x, t


def droplet_cloud(T: float, stream, x=None, t=None) -> PointCloud:
    """Intensity-1 cloud on the bounding rectangle of the queries' backward cones.

    Without queries the whole cone ``{|x| <= t <= T}`` is sampled.
    """
    if x is None:
        return _sample(DropletCone(T), stream)
    tu, tv = _targets(x, t)
    return _sample(Rect(0.0, float(tu.max()), 0.0, float(tv.max())), stream)


def _sample(region, stream) -> PointCloud:
    return sample_region(region, 1.0, stream)


def simulate_droplet(T: float, queries, stream, backend: str = "lpp", cloud: PointCloud | None = None) -> np.ndarray:
    """Droplet heights at ``queries`` (rows ``(x, t)``) for one seeded trial."""
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    x, t = _check_droplet_queries(T, q[:, 0], q[:, 1])
    if cloud is None:
        cloud = droplet_cloud(T, stream, x, t) if q.size else _sample(Rect(0, 0, 0, 0), stream)
    if backend == "lpp":
        return droplet_heights(cloud, x, t)
    if backend == "events":
        return droplet_heights_events(cloud, x, t)
    raise ValueError(f"unknown backend {backend!r}")


def simulate_flat(T: float, queries, stream, backend: str = "lpp", cloud: PointCloud | None = None) -> np.ndarray:
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    x, t = q[:, 0], q[:, 1]
    if np.any(t > T) or np.any(t < 0):
        raise ValueError("flat queries need 0 <= t <= T")
    if cloud is None:
        tu, tv = _targets(x, t)
        if q.size:
            # the union of the line-to-point triangles sits inside the one of the corner
            cloud = _sample(LineToPoint(float(tu.max()), float(tv.max())), stream)
        else:
            cloud = _sample(Rect(0, 0, 0, 0), stream)
    if backend == "lpp":
        return flat_heights(cloud, x, t)
    if backend == "events":
        return flat_heights_events(cloud, x, t)
    raise ValueError(f"unknown backend {backend!r}")


# --- stationary geometry ------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _v_ranks(v, order):
    """1-based Fenwick slots from the sort order of ``v``: first and last slot of each tie run."""
    n = v.size
    lo = np.empty(n, dtype=np.int64)
    hi = np.empty(n, dtype=np.int64)
    s = 0
    while s < n:
        e = s
        while e + 1 < n and v[order[e + 1]] == v[order[s]]:
            e += 1
        for k in range(s, e + 1):
            lo[order[k]] = s + 1
            hi[order[k]] = e + 1
        s = e + 1
    return lo, hi


@nb.njit(cache=True, nogil=True)
def _stationary_sweep(u, v, order, seg_lo, seg_h, tus, tvs):
    """Variational formula ``h(q) = max_y [h0(y) + L((y, -y), q)]`` in one sweep.

    ``seg_lo`` are the left ends of the segments of the piecewise-constant initial
    profile (seg_lo[0] = -inf) and ``seg_h`` its values; ``order`` sorts ``v``. Point
    values are ``1 + max(best value below-left, max h0 on [-v, u])``; a Fenwick tree
    over the ranks of ``v`` gives prefix maxima, a sparse table the range maxima of
    ``h0``. Segment indices of ``u`` and ``-v`` are found by monotone pointer walks.
    """
    n = u.size
    ns = seg_lo.size
    table = _sparse_table(seg_h)
    log2 = np.zeros(ns + 1, dtype=np.int64)
    for k in range(2, ns + 1):
        log2[k] = log2[k >> 1] + 1
    lo, hi = _v_ranks(v, order)
    # segment containing -v: walk down as v increases
    seg_a = np.empty(n, dtype=np.int64)
    p = ns - 1
    for k in range(n):
        i = order[k]
        y = -v[i]
        while p > 0 and seg_lo[p] > y:
            p -= 1
        seg_a[i] = p
    vs = v[order]
    neg = np.int32(-(1 << 30))
    tree = np.full(n + 1, neg, dtype=np.int32)
    qorder = np.argsort(tus, kind="mergesort")
    out = np.empty(tus.size, dtype=np.int64)
    q = 0
    nq = tus.size
    pb = 0
    for i in range(n + 1):
        cur_u = u[i] if i < n else np.inf
        while q < nq and tus[qorder[q]] < cur_u:
            j = qorder[q]
            best = _range_max(table, seg_lo, -tvs[j], tus[j])
            pm = _fen_query(tree, np.searchsorted(vs, tvs[j], side="right"))
            out[j] = best if best > pm else pm
            q += 1
        if i == n or q == nq:
            break
        if -v[i] > u[i]:
            continue  # below the initial line
        while pb + 1 < ns and seg_lo[pb + 1] <= u[i]:
            pb += 1
        a = seg_a[i]
        kk = log2[pb - a + 1]
        x1 = table[kk, a]
        x2 = table[kk, pb - (1 << kk) + 1]
        base = x1 if x1 > x2 else x2
        pm = _fen_query(tree, hi[i])
        val = 1 + (base if base > pm else pm)
        _fen_update(tree, lo[i], np.int32(val))
    return out


@nb.njit(cache=True, nogil=True)
def _sparse_table(seg_h):
    ns = seg_h.size
    levels = 1
    while (1 << levels) <= ns:
        levels += 1
    table = np.empty((levels, ns), dtype=np.int64)
    table[0, :] = seg_h
    for k in range(1, levels):
        w = 1 << (k - 1)
        for i in range(ns - (1 << k) + 1):
            a = table[k - 1, i]
            b = table[k - 1, i + w]
            table[k, i] = a if a > b else b
    return table


@nb.njit(cache=True, nogil=True)
def _range_max(table, seg_lo, lo, hi):
    a = np.searchsorted(seg_lo, lo, side="right") - 1
    b = np.searchsorted(seg_lo, hi, side="right") - 1
    if a < 0:
        a = 0
    length = b - a + 1
    k = 0
    while (1 << (k + 1)) <= length:
        k += 1
    x = table[k, a]
    y = table[k, b - (1 << k) + 1]
    return x if x > y else y


@nb.njit(cache=True, nogil=True)
def _fen_query(tree, r):
    best = tree[0]
    while r > 0:
        if tree[r] > best:
            best = tree[r]
        r -= r & (-r)
    return best


@nb.njit(cache=True, nogil=True)
def _fen_update(tree, r, val):
    n = tree.size - 1
    while r <= n:
        if tree[r] < val:
            tree[r] = val
        r += r & (-r)


@dataclass(frozen=True, eq=False)
class StationaryInitial:
    """Initial up/down steps on ``[-X, X]`` with ``h0(0) = 0``."""

    half_width: float
    up: np.ndarray
    down: np.ndarray

    def profile(self):
        """Segment left ends (first is ``-inf``) and the constant value on each."""
        pos = np.concatenate([self.up, self.down])
        jump = np.concatenate([np.ones(self.up.size, dtype=np.int64), -np.ones(self.down.size, dtype=np.int64)])
        order = np.argsort(pos, kind="mergesort")
        pos, jump = pos[order], jump[order]
        h = np.concatenate([[0], np.cumsum(jump)])
        # shift so that the segment containing 0 has value 0
        k = int(np.searchsorted(pos, 0.0, side="right"))
        h = h - h[k]
        return np.concatenate([[-np.inf], pos]), h

    def configuration(self) -> StepConfiguration:
        X = self.half_width
        left = -int(np.sum(self.up <= 0.0)) + int(np.sum(self.down <= 0.0))
        return StepConfiguration(0.0, self.up, self.down, left, (-X, X))


def sample_stationary_initial(rng: np.random.Generator, half_width: float) -> StationaryInitial:
    X = half_width
    up = _sorted_uniforms(rng, int(rng.poisson(2.0 * X)), -X, X)
    down = _sorted_uniforms(rng, int(rng.poisson(2.0 * X)), -X, X)
    return StationaryInitial(X, up, down)


def stationary_window(t_end: float, x, margin: float = 10.0) -> float:
    x = np.asarray(x, dtype=float)
    return float(t_end + (np.max(np.abs(x)) if x.size else 0.0) + margin)


def _check_light_cones(half_width: float, x, t) -> None:
    x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
    if np.any(x - t <= -half_width) or np.any(x + t >= half_width):
        raise ValueError("window too small: a query's backward light cone reaches its boundary")


def stationary_heights(init: StationaryInitial, cloud: PointCloud, x, t) -> np.ndarray:
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float).ravel(), np.asarray(t, dtype=float).ravel())
    _check_light_cones(init.half_width, x, t)
    seg_lo, seg_h = init.profile()
    keep = cloud.u + cloud.v >= 0.0
    u, v = (cloud.u, cloud.v) if keep.all() else (cloud.u[keep], cloud.v[keep])
    return _stationary_sweep(u, v, np.argsort(v), seg_lo, seg_h, x + t, t - x)


def stationary_heights_events(init: StationaryInitial, cloud: PointCloud, x, t) -> np.ndarray:
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float).ravel(), np.asarray(t, dtype=float).ravel())
    _check_light_cones(init.half_width, x, t)
    cfg = init.configuration()

    class _Single:
        def __init__(self, t_max):
            self.engine = _Engine([], cfg.window, 0.0, check="none")
            self.engine.layers.append(_load_layer(self.engine, cfg, 0))
            _schedule_initial(self.engine, 0)
            X = cfg.window[1]
            for ev in cloud_events(cloud, t_max):
                if -X < ev.x < X:
                    self.engine.push_nucleation(ev.x + ev.t, ev.x - ev.t, 0)

        def advance(self, t):
            self.engine.advance(t)

        def heights(self, x):
            return [self.engine.layers[0].height(x, self.engine.time)]

    return _events_heights(_Single, x, t)


def stationary_cloud(rng: np.random.Generator, x, t) -> PointCloud:
    """Bulk nucleations in the union of the queries' backward light cones."""
    tu, tv = _targets(x, t)
    region = LineToPoint(float(tu.max()), float(tv.max()))
    area = region.area
    n = int(rng.poisson(area))
    # u has density proportional to u + V on [-V, U]; sorted uniforms pushed through
    # the inverse CDF come out sorted, then v is uniform on [-u, V]
    s = region.U + region.V
    u = -region.V + s * np.sqrt(_sorted_uniforms(rng, n, 0.0, 1.0))
    v = region.V - (u + region.V) * rng.random(n)
    return PointCloud(u, v, region=region)


def simulate_stationary(t_end: float, queries, stream, margin: float = 10.0, backend: str = "lpp",
                        half_width: float | None = None) -> np.ndarray:
    """Stationary PNG heights at ``queries`` with reference ``h(0, 0) = 0``.

    ``stream`` may be an :class:`RngStream` or a live generator; with a generator the
    draws continue from its current state, which lets one trial hold several
    independent systems.
    """
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    x, t = q[:, 0], q[:, 1]
    if np.any(t > t_end) or np.any(t < 0):
        raise ValueError("stationary queries need 0 <= t <= t_end")
    X = stationary_window(t_end, x, margin) if half_width is None else half_width
    _check_light_cones(X, x, t)
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    init = sample_stationary_initial(rng, X)
    if not q.size:
        return np.zeros(0, dtype=np.int64)
    cloud = stationary_cloud(rng, x, t)
    if backend == "lpp":
        return stationary_heights(init, cloud, x, t)
    if backend == "events":
        return stationary_heights_events(init, cloud, x, t)
    raise ValueError(f"unknown backend {backend!r}")


# --- multilayer shadow backend -----------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _next_level(u, v, val, length):
    """Merge points of the level below: consecutive members ``p, p'`` of a pile give ``(u', v)``."""
    n = u.size
    counts = np.zeros(length + 2, dtype=np.int64)
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
    m = n - length
    nu = np.empty(m, dtype=np.float64)
    nv = np.empty(m, dtype=np.float64)
    c = 0
    for k in range(1, length + 1):
        for s in range(start[k], start[k + 1] - 1):
            p, p2 = members[s], members[s + 1]
            nu[c] = u[p2]
            nv[c] = v[p]
            c += 1
    return nu, nv


def multilayer_point_sets(cloud: PointCloud, depth: int, bound=None) -> list[PointCloud]:
    """Nucleation clouds of levels ``0, -1, ..., -depth`` for the droplet hierarchy.

    ``bound=(U, V)`` restricts everything to ``[0, U] x [0, V]``, which is exact for
    queries inside that rectangle.
    """
    cur = cloud
    if bound is not None:
        U, V = bound
        cur = cloud.restrict((cloud.u <= U) & (cloud.v <= V) & (cloud.u >= 0) & (cloud.v >= 0))
    out = [cur]
    for _ in range(depth):
        if len(cur) == 0:
            out.append(cur)
            continue
        idx = np.arange(len(cur))
        val, length = _pile_values(cur.v, idx)
        nu, nv = _next_level(cur.u, cur.v, val, length)
        cur = PointCloud(nu, nv)
        out.append(cur)
    return out


def multilayer_heights(cloud: PointCloud, x, t, depth: int, levels: list[PointCloud] | None = None) -> np.ndarray:
    """Heights ``h_l(x, t)`` for ``l = 0..-depth`` (rows) at each query (columns)."""
    tu, tv = _targets(x, t)
    if np.any((tu < 0) | (tv < 0)):
        raise ValueError("multilayer query outside the cone")
    if levels is None:
        levels = multilayer_point_sets(cloud, depth, (float(tu.max()), float(tv.max())))
    out = np.empty((depth + 1, tu.size), dtype=np.int64)
    for k in range(depth + 1):
        out[k] = chain_lengths(levels[k], tu, tv) - k
    return out


def multilayer_heights_events(cloud: PointCloud, x, t, depth: int, check: str = "local") -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sim = MultilayerSimulator(cloud_events(cloud, float(t.max())), depth, check=check)
    out = np.empty((depth + 1, x.size), dtype=np.int64)
    for i in np.argsort(t, kind="mergesort"):
        sim.advance(float(t[i]))
        out[:, i] = sim.heights(float(x[i]))
    return out
