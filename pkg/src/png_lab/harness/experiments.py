"""Experiment drivers.

Each experiment is a dataclass schema plus a function ``(cfg, seed, threads) ->
ExperimentResult``. Trials draw from per-block counter-based streams, so tables are a
pure function of ``(cfg, seed)``. Within a trial every height query is answered on
one cloud, which is what couples the points being correlated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy import stats

from .. import kernels
from ..analysis import binomial_se, fit_exponent, ks_two_sample, pearson
from ..geometry import LimitShape, PathSpec, RescaleSpec, hyperbola_points, is_characteristic_slope, rescale_height
from ..lpp import (
    CylinderSpec,
    brute_force_chain,
    chain_lengths,
    crosses_cylinder,
    longest_chain,
    longest_chain_line_to_point,
    maximizer_path,
    path_position_at_time,
)
from ..png_sim import (
    MultilayerSimulator,
    SmoothedStep,
    StepConfiguration,
    cloud_events,
    default_depth,
    droplet_cloud,
    droplet_heights,
    eta_smoothed_from_heights,
    evolve_surface,
    multilayer_heights,
    simulate_flat,
    simulate_stationary,
)
from ..sampling import DropletCone, LineToPoint, PointCloud, Rect, sample_region
from .runner import ExperimentResult, ResultTable, block_seed, block_streams, map_trials

Geometry = Literal["droplet", "flat", "stationary"]


def _positive(name, v):
    if not v > 0:
        raise ValueError(f"{name} must be positive, got {v}")


def _corr_row(a, b, bootstrap, seed):
    r, (lo, hi) = pearson(np.column_stack([a, b]), bootstrap=bootstrap, seed=seed)
    return r, lo, hi


def _heights(geometry: str, T: float, queries: np.ndarray, stream, margin: float = 10.0) -> np.ndarray:
    """All queries of one trial on a single cloud."""
    if geometry == "droplet":
        x, t = queries[:, 0], queries[:, 1]
        cloud = droplet_cloud(T, stream, x, t)
        return droplet_heights(cloud, x, t)
    if geometry == "flat":
        return simulate_flat(T, queries, stream)
    if geometry == "stationary":
        return simulate_stationary(T, queries, stream, margin=margin)
    raise ValueError(f"unknown geometry {geometry!r}")


def _rescaled(h, x, t, geometry: str, xi: float = 0.0) -> np.ndarray:
    spec = RescaleSpec(float(np.max(t)), xi, LimitShape(geometry))
    return rescale_height(h, (x, t), spec)


# --- one-point law ------------------------------------------------------------------


@dataclass(frozen=True)
class OnePointConfig:
    geometry: Geometry = "droplet"
    T: float = 8.0
    trials: int = 100000
    exact_max_T: float = 16.0
    band: tuple[float, ...] = (0.01, 0.99)

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be non-negative")
        _positive("trials", self.trials)


def exp_one_point(cfg: OnePointConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Empirical law of ``h(0, T)`` against the Fredholm determinant (droplet, small T)."""
    T = cfg.T
    streams = block_streams(seed, 0)

    def trial(i):
        s = streams(i)
        if T == 0:
            return 0
        if cfg.geometry == "droplet":
            return longest_chain(sample_region(Rect(0.0, T, 0.0, T), 1.0, s), (0.0, 0.0), (T, T)).length
        if cfg.geometry == "flat":
            return longest_chain_line_to_point(sample_region(LineToPoint(T, T), 1.0, s), (T, T)).length
        return int(simulate_stationary(T, [(0.0, T)], s)[0])

    h = np.asarray(map_trials(trial, cfg.trials, threads), dtype=np.int64)
    levels = np.arange(int(h.min()) - 1, int(h.max()) + 1)
    emp = np.searchsorted(np.sort(h), levels, side="right") / h.size
    cols = {"level": levels, "emp_cdf": emp}
    summary = {"mean": float(h.mean()), "var": float(h.var(ddof=1)), "trials": int(h.size)}
    if cfg.geometry == "droplet" and T <= cfg.exact_max_T:
        exact = kernels.gap_cdf(T, levels)  # unclamped; binomial_se clips p(1-p) at 0
        se = binomial_se(exact, h.size)
        z = np.where(se > 0, (emp - exact) / np.where(se > 0, se, 1.0), 0.0)
        cols.update(exact_cdf=exact, se=se, z=z)
        lo, hi = cfg.band
        mask = (exact >= lo) & (exact <= hi)
        mean_o, var_o = kernels.gap_moments(T) if T > 0 else (0.0, 0.0)
        summary.update(
            max_abs_z=float(np.max(np.abs(z[mask]))) if np.any(mask) else 0.0,
            levels_checked=int(mask.sum()),
            oracle_mean=mean_o,
            oracle_var=var_o,
            mean_z=float((h.mean() - mean_o) / math.sqrt(max(var_o, 1e-300) / h.size)) if T > 0 else 0.0,
        )
    trials = ResultTable({"trial": np.arange(h.size), "h": h}, "trials")
    return ExperimentResult([ResultTable(cols), trials], summary)


# --- exponents ----------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentsConfig:
    geometry: Geometry = "droplet"
    T_grid: tuple[float, ...] = (64.0, 128.0, 256.0, 512.0)
    trials: int = 1000
    path_trials: int = 500
    tau: float = 0.5
    strip_c: float = 6.0
    strip_eps: float = 0.05
    strip_check_T: float = 64.0
    bootstrap: int = 2000

    def __post_init__(self):
        if self.geometry != "droplet":
            raise ValueError("exponent runs are defined for the droplet")
        if len(self.T_grid) < 3 or max(self.T_grid) / min(self.T_grid) < 8 - 1e-9:
            raise ValueError("T_grid must have at least 3 points spanning 3 octaves")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1) for the cylinder event")
        if self.path_trials > self.trials:
            raise ValueError("path_trials cannot exceed trials")


def strip_half_width(T: float, c: float = 6.0, eps: float = 0.05) -> float:
    return c * T ** (2.0 / 3.0 + eps)


def exp_exponents(cfg: ExponentsConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Fluctuation and transversal exponents plus the cylinder event, droplet at xi=0.

    Clouds cover ``[0, B]^2`` with ``B = T + T**tau`` and are truncated to the strip
    ``|x| <= c T**(2/3 + eps)``; for ``T <= strip_check_T`` the full cloud is also
    evaluated and disagreements counted. Cylinder crossings are evaluated on both the
    leftmost and the rightmost maximizer from O to B.
    """
    rows_trial = []
    summary_rows = []
    h_samples, dev_samples = [], []
    for k, T in enumerate(cfg.T_grid):
        B = T + T**cfg.tau
        w2 = 2.0 * strip_half_width(T, cfg.strip_c, cfg.strip_eps)
        cyl = CylinderSpec.vertical(T, cfg.tau)
        streams = block_streams(seed, k)
        check_full = T <= cfg.strip_check_T

        def trial(i, T=T, B=B, w2=w2, cyl=cyl, streams=streams, check_full=check_full):
            full = sample_region(Rect(0.0, B, 0.0, B), 1.0, streams(i))
            cloud = full.restrict(np.abs(full.u - full.v) <= w2)
            h = longest_chain(cloud, (0.0, 0.0), (T, T)).length
            disc = int(check_full and longest_chain(full, (0.0, 0.0), (T, T)).length != h)
            dev, cl, cr = -1.0, -1, -1
            if i < cfg.path_trials:
                p = maximizer_path(cloud, (0.0, 0.0), (T, T), "leftmost")
                dev = abs(path_position_at_time(p, 0.5 * T))
                cl = int(crosses_cylinder(maximizer_path(cloud, (0.0, 0.0), (B, B), "leftmost"), cyl))
                cr = int(crosses_cylinder(maximizer_path(cloud, (0.0, 0.0), (B, B), "rightmost"), cyl))
            return h, disc, dev, cl, cr

        res = map_trials(trial, cfg.trials, threads)
        h = np.array([r[0] for r in res], dtype=np.int64)
        disc = np.array([r[1] for r in res], dtype=np.int64)
        dev = np.array([r[2] for r in res[: cfg.path_trials]])
        cl = np.array([r[3] for r in res[: cfg.path_trials]], dtype=np.int64)
        cr = np.array([r[4] for r in res[: cfg.path_trials]], dtype=np.int64)
        h_samples.append(h.astype(float))
        dev_samples.append(dev)
        n_p = max(cfg.path_trials, 1)
        summary_rows.append(
            (T, float(np.std(h, ddof=1)), float(np.median(dev)) if dev.size else 0.0,
             cl.sum() / n_p, cr.sum() / n_p, np.sum(cl | cr) / n_p, int(disc.sum()), int(check_full),
             cfg.trials, cfg.path_trials, cyl.nu)
        )
        for i, r in enumerate(res):
            rows_trial.append((T, i, *r))

    names = ["T", "sd", "median_dev", "cross_left", "cross_right", "cross_any", "strip_discrepancies",
             "strip_checked", "trials", "path_trials", "nu"]
    ints = {"strip_discrepancies", "strip_checked", "trials", "path_trials"}
    main = ResultTable({n: np.array([r[j] for r in summary_rows], dtype=np.int64 if n in ints else float)
                        for j, n in enumerate(names)})
    tnames = ["T", "trial", "h", "strip_discrepancy", "mid_dev", "cross_left", "cross_right"]
    tints = {"trial", "h", "strip_discrepancy", "cross_left", "cross_right"}
    trials = ResultTable({n: np.array([r[j] for r in rows_trial], dtype=np.int64 if n in tints else float)
                          for j, n in enumerate(tnames)}, "trials")
    Ts = np.asarray(cfg.T_grid, dtype=float)
    fluct = fit_exponent(np.column_stack([Ts, main["sd"]]), samples=h_samples,
                         statistic=lambda s: np.std(s, ddof=1), bootstrap=cfg.bootstrap, seed=block_seed(seed, 900))
    summary = {"fluct_slope": fluct.slope, "fluct_ci": list(fluct.ci95)}
    if cfg.path_trials >= 1:
        trans = fit_exponent(np.column_stack([Ts, main["median_dev"]]), samples=dev_samples, statistic=np.median,
                             bootstrap=cfg.bootstrap, seed=block_seed(seed, 901))
        summary.update(transversal_slope=trans.slope, transversal_ci=list(trans.ci95),
                       cross_any=main["cross_any"].tolist(), cross_left=main["cross_left"].tolist(),
                       cross_right=main["cross_right"].tolist())
    summary["strip_discrepancies"] = int(main["strip_discrepancies"].sum())
    return ExperimentResult([main, trials], summary)


# --- slow decorrelation ---------------------------------------------------------------


@dataclass(frozen=True)
class DecorrelationConfig:
    geometry: Geometry = "droplet"
    xi: float = 0.0
    tau: float = 0.5
    beta: float = 0.3
    T_grid: tuple[float, ...] = (100.0, 200.0, 400.0)
    trials: int = 2000
    direction: Literal["characteristic", "fixed_x", "path"] = "characteristic"
    pi_prime: Optional[float] = None
    control_tau: Optional[float] = None
    offsets_u: tuple[float, ...] = ()
    bootstrap: int = 2000
    margin: float = 10.0

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.control_tau is not None and not 0 < self.control_tau <= 1:
            raise ValueError("control_tau must lie in (0, 1]")
        if self.geometry == "droplet" and not abs(self.xi) < 1:
            raise ValueError("droplet runs need |xi| < 1")
        if self.trials < 100:
            raise ValueError("trials must be at least 100")
        if self.direction == "fixed_x" and self.geometry == "droplet" and self.xi == 0:
            raise ValueError("direction fixed_x with xi=0 is the characteristic itself")
        if self.direction == "path":
            if self.pi_prime is None or self.pi_prime == 0:
                raise ValueError("direction path needs a non-zero pi_prime")
            PathSpec(self.xi, self.pi_prime)


def second_point(cfg: DecorrelationConfig, T: float, tau: float) -> tuple[float, float]:
    """The later point paired with ``A = (xi T, T)``."""
    t_b = T + T**tau
    if cfg.direction == "characteristic":
        x_b = cfg.xi * t_b if cfg.geometry == "droplet" else cfg.xi * T
    elif cfg.direction == "fixed_x":
        x_b = cfg.xi * T
    else:
        x_b = cfg.xi * T + T**tau / cfg.pi_prime
    return x_b, t_b


def decorrelation_stats(hA, hB, pA, pB, geometry: str, xi: float, T: float, beta: float,
                        bootstrap: int, seed: int) -> dict:
    """Correlation of rescaled fluctuations and the size of their difference."""
    hA, hB = np.asarray(hA, dtype=float), np.asarray(hB, dtype=float)
    ga = _rescaled(hA, pA[0], pA[1], geometry, xi) * np.cbrt(pA[1])
    gb = _rescaled(hB, pB[0], pB[1], geometry, xi) * np.cbrt(pB[1])
    diff = gb - ga
    same = np.array_equal(hA, hB) and pA == pB
    if same:
        r, lo, hi = 1.0, 1.0, 1.0
    else:
        r, lo, hi = _corr_row(ga / np.cbrt(pA[1]), gb / np.cbrt(pB[1]), bootstrap, seed)
    tb = T**beta
    return {
        "corr": r, "corr_lo": lo, "corr_hi": hi,
        "mean_diff": float(diff.mean()),
        "sd_diff": float(diff.std(ddof=1)),
        "sd_diff_scaled": float(diff.std(ddof=1) / np.cbrt(T)),
        "p_within_raw": float(np.mean(np.abs(diff) <= tb)),
        "p_within": float(np.mean(np.abs(diff - diff.mean()) <= tb)),
    }


def exp_slow_decorrelation(cfg: DecorrelationConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Correlation between the heights at ``A = (xi T, T)`` and a later point.

    Kind codes in the table: 0 the configured direction at ``tau``, 1 the control at
    ``control_tau``, 2 the configured point displaced by ``u T**(2/3)``.
    """
    rows, trial_rows = [], []
    for k, T in enumerate(cfg.T_grid):
        A = (cfg.xi * T, T)
        targets = [(0, cfg.tau, 0.0, second_point(cfg, T, cfg.tau))]
        for u in cfg.offsets_u:
            xb, tb = second_point(cfg, T, cfg.tau)
            targets.append((2, cfg.tau, u, (xb + u * T ** (2.0 / 3.0), tb)))
        if cfg.control_tau is not None:
            targets.append((1, cfg.control_tau, 0.0, second_point(cfg, T, cfg.control_tau)))
        q = np.array([A] + [p for *_, p in targets])
        t_end = float(q[:, 1].max())
        streams = block_streams(seed, k)

        def trial(i, q=q, t_end=t_end, streams=streams):
            return _heights(cfg.geometry, t_end, q, streams(i), cfg.margin)

        H = np.array(map_trials(trial, cfg.trials, threads), dtype=np.int64)
        for j, (kind, tau, u, p) in enumerate(targets, start=1):
            st = decorrelation_stats(H[:, 0], H[:, j], A, p, cfg.geometry, cfg.xi, T, cfg.beta, cfg.bootstrap,
                                     block_seed(seed, k, j, 77))
            rows.append({"T": T, "kind": kind, "tau": tau, "u_offset": u, "x_b": p[0], "t_b": p[1], **st})
        for i in range(cfg.trials):
            for j in range(q.shape[0]):
                trial_rows.append((T, i, j, q[j, 0], q[j, 1], H[i, j]))
    names = list(rows[0])
    main = ResultTable({n: np.array([r[n] for r in rows], dtype=np.int64 if n == "kind" else float) for n in names})
    tn = ["T", "trial", "query", "x", "t", "h"]
    trials = ResultTable({n: np.array([r[j] for r in trial_rows], dtype=np.int64 if n in ("trial", "query", "h")
                                      else float) for j, n in enumerate(tn)}, "trials")
    return ExperimentResult([main, trials], {"rows": rows})


# --- space-like paths ---------------------------------------------------------------------


@dataclass(frozen=True)
class SpacelikeConfig:
    xi: float = 0.5
    pi_prime_list: tuple[float, ...] = (0.0, 0.5)
    u_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 1.0)
    T: float = 256.0
    trials: int = 2000
    bootstrap: int = 2000

    def __post_init__(self):
        if self.xi == 0:
            raise ValueError("space-like runs need xi != 0")
        if not abs(self.xi) < 1:
            raise ValueError("need |xi| < 1")
        for pp in self.pi_prime_list:
            if is_characteristic_slope(self.xi, pp):
                raise ValueError("characteristic direction excluded")


def spacelike_points(cfg: SpacelikeConfig):
    """Rows ``(pi', u_eff, u_path, x, t)``; ``u_grid`` holds effective separations."""
    T, c = cfg.T, cfg.T ** (2.0 / 3.0)
    out = []
    for pp in cfg.pi_prime_list:
        fac = PathSpec(cfg.xi, pp).effective_factor
        for s in cfg.u_grid:
            up = s / fac
            x = cfg.xi * T + up * c
            t = T + pp * up * c
            if not abs(x) <= t:
                raise ValueError(f"path point ({x}, {t}) leaves the droplet cone")
            out.append((pp, s, up, x, t))
    return out


def exp_spacelike(cfg: SpacelikeConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Correlation with ``(xi T, T)`` along locally linear paths, indexed by effective separation."""
    pts = spacelike_points(cfg)
    ref = (cfg.xi * cfg.T, cfg.T)
    q = np.array([ref] + [(p[3], p[4]) for p in pts])
    t_end = float(q[:, 1].max())
    streams = block_streams(seed, 0)

    def trial(i):
        return _heights("droplet", t_end, q, streams(i))

    H = np.array(map_trials(trial, cfg.trials, threads), dtype=np.int64)
    r0 = _rescaled(H[:, 0], ref[0], ref[1], "droplet")
    rows = []
    for j, (pp, s, up, x, t) in enumerate(pts, start=1):
        rj = _rescaled(H[:, j], x, t, "droplet")
        if x == ref[0] and t == ref[1]:
            r, lo, hi = 1.0, 1.0, 1.0
        else:
            r, lo, hi = _corr_row(r0, rj, cfg.bootstrap, block_seed(seed, j, 55))
        rows.append((pp, s, up, x, t, r, lo, hi))
    names = ["pi_prime", "u_eff", "u_path", "x", "t", "corr", "corr_lo", "corr_hi"]
    main = ResultTable({n: np.array([r[j] for r in rows], dtype=float) for j, n in enumerate(names)})
    trials = ResultTable({"trial": np.repeat(np.arange(cfg.trials), q.shape[0]),
                          "query": np.tile(np.arange(q.shape[0]), cfg.trials), "h": H.ravel()}, "trials")
    return ExperimentResult([main, trials], {})


# --- stationary ------------------------------------------------------------------------------


@dataclass(frozen=True)
class StationaryConfig:
    T: float = 200.0
    L: float = 50.0
    trials: int = 5000
    repeats: int = 10
    L_grid: tuple[float, ...] = (32.0, 64.0, 128.0, 256.0, 512.0)
    sd_trials: int = 2000
    margin: float = 10.0
    bootstrap: int = 2000

    def __post_init__(self):
        if self.T < 0 or self.L < 0:
            raise ValueError("T and L must be non-negative")
        if any(L <= 0 for L in self.L_grid):
            raise ValueError("L_grid entries must be positive")


def exp_stationary(cfg: StationaryConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Increment law ``h(0,T+L) - h(0,T)`` against an independent ``h(0,L)``, and the scaling of ``h(0,L)``."""
    T, L = cfg.T, cfg.L
    ks_rows = []
    for r in range(cfg.repeats):
        streams = block_streams(seed, 0, r)

        def trial(i, streams=streams):
            rng = streams(i).generator()
            h = simulate_stationary(T + L, [(0.0, T), (0.0, T + L)], rng, cfg.margin)
            ind = simulate_stationary(L, [(0.0, L)], rng, cfg.margin)[0] if L > 0 else 0
            return int(h[1] - h[0]), int(ind)

        res = np.array(map_trials(trial, cfg.trials, threads), dtype=np.int64)
        d, ind = res[:, 0], res[:, 1]
        if L == 0 or (np.ptp(d) == 0 and np.ptp(ind) == 0 and d[0] == ind[0]):
            ks, p = 0.0, 1.0
        else:
            ks, p = ks_two_sample(d, ind)
        ks_rows.append((r, ks, p, float(d.mean()), float(ind.mean()), float(d.std()), float(ind.std())))
    names = ["repeat", "ks", "p_value", "mean_increment", "mean_independent", "sd_increment", "sd_independent"]
    main = ResultTable({n: np.array([x[j] for x in ks_rows], dtype=np.int64 if n == "repeat" else float)
                        for j, n in enumerate(names)})
    grid_rows, samples = [], []
    for k, Lk in enumerate(cfg.L_grid):
        streams = block_streams(seed, 1, k)

        def trial(i, Lk=Lk, streams=streams):
            return int(simulate_stationary(Lk, [(0.0, Lk)], streams(i), cfg.margin)[0])

        h = np.array(map_trials(trial, cfg.sd_trials, threads), dtype=float)
        samples.append(h - 2 * Lk)
        grid_rows.append((Lk, float(h.mean()), float(h.mean() / (2 * Lk) - 1), float(np.std(h - 2 * Lk, ddof=1))))
    gnames = ["L", "mean", "rate_error", "sd"]
    grid = ResultTable({n: np.array([x[j] for x in grid_rows]) for j, n in enumerate(gnames)}, "scaling")
    summary = {"ks_pass_001": int(np.sum(main["p_value"] > 0.01)), "repeats": cfg.repeats}
    if len(cfg.L_grid) >= 3:
        fit = fit_exponent(np.column_stack([grid["L"], grid["sd"]]), samples=samples,
                           statistic=lambda s: np.std(s, ddof=1), bootstrap=cfg.bootstrap,
                           seed=block_seed(seed, 902))
        summary.update(sd_slope=fit.slope, sd_ci=list(fit.ci95))
    if cfg.L_grid:
        summary["rate_error_at_max_L"] = float(grid["rate_error"][int(np.argmax(grid["L"]))])
    return ExperimentResult([main, grid], summary)


# --- fourth moments of the smoothed eta ------------------------------------------------------


@dataclass(frozen=True)
class MomentConfig:
    T: float = 64.0
    u_grid: tuple[float, ...] = ()
    M: float = 2.0
    depth: Optional[int] = None
    trials: int = 2000
    pairs: Literal["reference", "all"] = "reference"
    reference_u: float = 0.0
    curve: Literal["level", "stated"] = "level"

    def __post_init__(self):
        _positive("T", self.T)
        g = np.sort(np.asarray(self.grid()))
        if np.any(np.abs(g) > 1 + 1e-12):
            raise ValueError("u_grid must lie in [-1, 1]")
        if g.size > 1 and np.min(np.diff(g)) < self.T ** (-2.0 / 3.0) - 1e-12:
            raise ValueError("u_grid spacing must be at least T^(-2/3)")
        if self.pairs == "reference" and not np.any(np.isclose(g, self.reference_u)):
            raise ValueError("reference_u must be a grid point")

    def grid(self) -> tuple[float, ...]:
        """Configured grid, or ``i / T**(2/3)`` on ``[-1, 1]`` when none is given."""
        if self.u_grid:
            return tuple(self.u_grid)
        step = self.T ** (-2.0 / 3.0)
        n = int(math.floor(1.0 / step + 1e-9))
        return tuple(float(i * step) for i in range(-n, n + 1))


def moment_pairs(cfg: MomentConfig, grid) -> list[tuple[int, int]]:
    g = np.asarray(grid)
    if cfg.pairs == "all":
        return [(i, j) for i in range(g.size) for j in range(i + 1, g.size)]
    r = int(np.flatnonzero(np.isclose(g, cfg.reference_u))[0])
    return [(r, j) for j in range(g.size) if j != r]


def ratio_trend(du, ratio) -> tuple[float, float]:
    """Max/min ratio band and the least-squares slope of log ratio against log du."""
    du, ratio = np.asarray(du, dtype=float), np.asarray(ratio, dtype=float)
    if ratio.size == 0 or np.any(ratio <= 0):
        return math.inf, math.nan
    band = float(ratio.max() / ratio.min())
    if np.ptp(du) == 0:
        return band, 0.0
    slope = float(np.polyfit(np.log(du), np.log(ratio), 1)[0])
    return band, slope


def exp_moment_bound(cfg: MomentConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Fourth moments of smoothed eta differences along the hyperbola."""
    T = cfg.T
    grid = np.asarray(cfg.grid(), dtype=float)
    depth = default_depth(T, cfg.M) if cfg.depth is None else cfg.depth
    f = SmoothedStep(cfg.M)
    x, t = hyperbola_points(T, grid, curve=cfg.curve)
    streams = block_streams(seed, 0)

    def trial(i):
        cloud = droplet_cloud(float(t.max()), streams(i), x, t)
        hs = multilayer_heights(cloud, x, t, depth)
        return [eta_smoothed_from_heights(hs[:, q], f, T) for q in range(grid.size)]

    eta = np.array(map_trials(trial, cfg.trials, threads))
    rows = []
    scale = T ** (-2.0 / 3.0)
    for i, j in moment_pairs(cfg, grid):
        d4 = (eta[:, i] - eta[:, j]) ** 4
        du = abs(grid[i] - grid[j])
        m = float(d4.mean())
        rows.append((grid[i], grid[j], du, m, float(d4.std(ddof=1) / math.sqrt(d4.size)), m / (du * du + du * scale)))
    names = ["u_i", "u_j", "du", "moment", "moment_se", "ratio"]
    main = ResultTable({n: np.array([r[k] for r in rows]) for k, n in enumerate(names)})
    band, slope = ratio_trend(main["du"], main["ratio"])
    etab = ResultTable({"trial": np.repeat(np.arange(cfg.trials), grid.size),
                        "u": np.tile(grid, cfg.trials), "eta": eta.ravel()}, "eta")
    summary = {"band": band if math.isfinite(band) else None, "slope": slope if math.isfinite(slope) else None,
               "depth": depth, "grid_points": int(grid.size)}
    return ExperimentResult([main, etab], summary)


# --- short-distance Poisson bound ------------------------------------------------------------


@dataclass(frozen=True)
class ShortDistanceConfig:
    T: float = 1000.0
    trials: int = 100000
    area: float = 1.0
    k_max: int = 8

    def __post_init__(self):
        if self.area < 0:
            raise ValueError("area must be non-negative")


def exp_short_distance(cfg: ShortDistanceConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Counts in a region of the given area (unit by default) against the exact Poisson tail."""
    streams = block_streams(seed, 0)
    region = Rect(0.0, cfg.area, 0.0, 1.0)

    def trial(i):
        return len(sample_region(region, 1.0, streams(i))) if cfg.area > 0 else 0

    n = np.array(map_trials(trial, cfg.trials, threads), dtype=np.int64)
    k_T = int(math.ceil(cfg.T ** (1.0 / 6.0)))
    ks = sorted(set(range(cfg.k_max + 1)) | {k_T})
    emp = np.array([np.mean(n >= k) for k in ks])
    exact = np.array([float(stats.poisson.sf(k - 1, cfg.area)) if cfg.area > 0 else float(k <= 0) for k in ks])
    se = binomial_se(exact, n.size)
    z = np.where(se > 0, (emp - exact) / np.where(se > 0, se, 1.0), 0.0)
    main = ResultTable({"k": np.array(ks), "emp_tail": emp, "exact_tail": exact, "se": se, "z": z})
    summary = {"k_T": k_T, "emp_at_k_T": float(np.mean(n >= k_T)), "max_count": int(n.max()),
               "max_abs_z": float(np.max(np.abs(z)))}
    return ExperimentResult([main], summary)


# --- two-parameter surface (exploratory) ---------------------------------------------------------


@dataclass(frozen=True)
class SurfaceConfig:
    T: float = 200.0
    u_grid: tuple[float, ...] = (0.0, 0.5, 1.0)
    v_grid: tuple[float, ...] = (0.0, 0.1, 0.25)
    trials: int = 500
    bootstrap: int = 2000


def exp_surface(cfg: SurfaceConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Empirical correlation of the rescaled droplet height at ``(u T^{2/3}, T(1+v))`` with ``(0, T)``.

    Exploration only: no limit is asserted for this two-parameter field.
    """
    T = cfg.T
    pts = [(u, v, u * T ** (2.0 / 3.0), T * (1 + v)) for v in cfg.v_grid for u in cfg.u_grid]
    for _, _, x, t in pts:
        if not (t > 0 and abs(x) <= t):
            raise ValueError(f"surface point ({x}, {t}) outside the droplet cone")
    q = np.array([(0.0, T)] + [(p[2], p[3]) for p in pts])
    t_end = float(q[:, 1].max())
    streams = block_streams(seed, 0)
    H = np.array(map_trials(lambda i: _heights("droplet", t_end, q, streams(i)), cfg.trials, threads))
    r0 = _rescaled(H[:, 0], 0.0, T, "droplet")
    rows = []
    for j, (u, v, x, t) in enumerate(pts, start=1):
        if u == 0 and v == 0:
            r, lo, hi = 1.0, 1.0, 1.0
        else:
            r, lo, hi = _corr_row(r0, _rescaled(H[:, j], x, t, "droplet"), cfg.bootstrap, block_seed(seed, j, 66))
        rows.append((u, v, r, lo, hi))
    names = ["u", "v", "corr", "corr_lo", "corr_hi"]
    return ExperimentResult([ResultTable({n: np.array([r[k] for r in rows]) for k, n in enumerate(names)})], {})


# --- library checks -------------------------------------------------------------------------------


@dataclass(frozen=True)
class LppOracleConfig:
    clouds: int = 1000
    n_max: int = 10
    tie_grid: int = 4


def crafted_tie_cases() -> list[tuple[str, list, object, tuple]]:
    """Hand-built clouds with coincident coordinates and points on rectangle borders."""
    sq = ((0.0, 0.0), (1.0, 1.0))
    return [
        ("repeated point", [(0.5, 0.5)] * 4, *sq),
        ("vertical column", [(0.5, 0.1 * k) for k in range(1, 9)], *sq),
        ("horizontal row", [(0.1 * k, 0.5) for k in range(1, 9)], *sq),
        ("source and target corners", [(0.0, 0.0), (1.0, 1.0), (0.5, 0.5)], *sq),
        ("border points", [(0.0, 0.3), (0.3, 0.0), (1.0, 0.7), (0.7, 1.0), (0.5, 0.5)], *sq),
        ("diagonal", [(0.1 * k, 0.1 * k) for k in range(10)], *sq),
        ("anti-diagonal", [(0.1 * k, 1.0 - 0.1 * k) for k in range(11)], *sq),
        ("grid ties", [(a / 3, b / 3) for a in range(4) for b in range(4) if (a + b) % 2 == 0], *sq),
        ("just outside", [(1.0 + 1e-12, 0.5), (0.5, -1e-12), (0.5, 0.5)], *sq),
        ("line: on the line", [(-0.5, 0.5), (0.0, 0.0), (0.5, -0.5), (0.2, 0.3)], None, (1.0, 1.0)),
        ("line: below the line", [(-0.5, 0.4), (0.3, 0.3), (0.6, 0.6)], None, (1.0, 1.0)),
        ("line: target corner ties", [(1.0, 1.0), (1.0, 0.2), (0.2, 1.0), (0.2, 0.2)], None, (1.0, 1.0)),
    ]


def exp_lpp_oracle(cfg: LppOracleConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Fast chain lengths against the exhaustive oracle on small clouds.

    Kind codes: 0 random point-to-point, 1 random line-to-point, 2 crafted.
    """
    streams = block_streams(seed, 0)

    def trial(i):
        rng = streams(i).generator()
        n = int(rng.integers(0, cfg.n_max + 1))
        pts = rng.random((n, 2))
        if rng.random() < 0.5:
            pts = np.round(pts * cfg.tie_grid) / cfg.tie_grid
        if i % 2 == 0:
            src = tuple(np.round(rng.random(2) * 0.3, 2))
            tgt = tuple(0.7 + np.round(rng.random(2) * 0.3, 2))
            cloud = PointCloud(pts[:, 0], pts[:, 1])
            fast = longest_chain(cloud, src, tgt).length
            multi = int(chain_lengths(cloud, [tgt[0]], [tgt[1]], source=src)[0])
            return 0, n, fast, multi, brute_force_chain(cloud, src, tgt)
        pts = 2 * pts - 1
        tgt = (float(rng.uniform(0, 1)), float(rng.uniform(-0.5, 1)))
        cloud = PointCloud(pts[:, 0], pts[:, 1])
        fast = longest_chain_line_to_point(cloud, tgt).length
        multi = int(chain_lengths(cloud, [tgt[0]], [tgt[1]], line=True)[0])
        return 1, n, fast, multi, brute_force_chain(cloud, None, tgt)

    rows = [(i, *r) for i, r in enumerate(map_trials(trial, cfg.clouds, threads))]
    for name, pts, src, tgt in crafted_tie_cases():
        cloud = PointCloud.from_points(pts)
        if src is None:
            fast = longest_chain_line_to_point(cloud, tgt).length
            multi = int(chain_lengths(cloud, [tgt[0]], [tgt[1]], line=True)[0])
        else:
            fast = longest_chain(cloud, src, tgt).length
            multi = int(chain_lengths(cloud, [tgt[0]], [tgt[1]], source=src)[0])
        rows.append((len(rows), 2, len(pts), fast, multi, brute_force_chain(cloud, src, tgt)))
    names = ["case", "kind", "n", "fast", "multi", "brute"]
    main = ResultTable({n: np.array([r[k] for r in rows], dtype=np.int64) for k, n in enumerate(names)})
    bad = int(np.sum((main["fast"] != main["brute"]) | (main["multi"] != main["brute"])))
    return ExperimentResult([main], {"mismatches": bad, "cases": main.rows})


@dataclass(frozen=True)
class DynamicsConfig:
    seeds: int = 200
    T_max: float = 10.0
    queries: int = 20


def exp_dynamics(cfg: DynamicsConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Event-driven droplet heights against the LPP heights on the same nucleations."""
    streams = block_streams(seed, 0)

    def trial(i):
        s = streams(i)
        rng = np.random.Generator(np.random.Philox(key=block_seed(seed, 1, i)))
        T = float(rng.uniform(0.5, cfg.T_max))
        t = rng.uniform(0.0, T, cfg.queries)
        x = t * rng.uniform(-1.0, 1.0, cfg.queries)
        cloud = sample_region(DropletCone(T), 1.0, s)
        events = cloud_events(cloud)
        init = StepConfiguration.flat(window=(-T - 1.0, T + 1.0))
        h_ev = np.array([evolve_surface(init, events, float(tq)).height(float(xq)) for xq, tq in zip(x, t)])
        h_lpp = droplet_heights(cloud, x, t)
        return [(i, T, xq, tq, int(a), int(b)) for xq, tq, a, b in zip(x, t, h_ev, h_lpp)]

    rows = [r for rs in map_trials(trial, cfg.seeds, threads) for r in rs]
    names = ["seed", "T", "x", "t", "h_events", "h_lpp"]
    ints = {"seed", "h_events", "h_lpp"}
    main = ResultTable({n: np.array([r[k] for r in rows], dtype=np.int64 if n in ints else float)
                        for k, n in enumerate(names)})
    return ExperimentResult([main], {"mismatches": int(np.sum(main["h_events"] != main["h_lpp"]))})


@dataclass(frozen=True)
class KernelAlgebraConfig:
    T: float = 20.0
    interior_margin: int = 40
    theta_scaled: tuple[float, ...] = (0.0, 0.3, 0.7)

    def __post_init__(self):
        if len(set(self.theta_scaled)) != 3:
            raise ValueError("theta_scaled needs three distinct angles")


def exp_kernel_algebra(cfg: KernelAlgebraConfig, seed: int = 0, threads: int = 1) -> ExperimentResult:
    """Projection, commutation, equal-angle and semigroup identities of the Bessel kernels.

    ``theta_scaled`` holds ``T * theta``. Semigroup rows compare ``K(a,b) K(b,c)`` with
    ``K(a,c)`` for increasing angles and with ``-K(a,c)`` for decreasing ones; both are
    absolute maxima over interior entries, with the relative value alongside.
    """
    T = cfg.T
    kw = kernels.build_kernel(T, kernels.IndexWindow.spectral(T))
    n, m = kw.window.size, cfg.interior_margin
    sl = slice(m, n - m)
    B, H = kw.B, kw.H
    th = [s / T for s in cfg.theta_scaled]

    def imax(A):
        return float(np.max(np.abs(A[sl, sl])))

    rows = [(0, imax(B @ B - B), imax(B)), (1, imax(H @ B - B @ H), imax(B))]
    eq = max(imax(kernels.extended_matrix(kw, a, a) - B) for a in th)
    rows.append((2, eq, imax(B)))
    a, b, c = sorted(th)
    K13 = kernels.extended_matrix(kw, a, c)
    rows.append((3, imax(kernels.extended_matrix(kw, a, b) @ kernels.extended_matrix(kw, b, c) - K13), imax(K13)))
    K31 = kernels.extended_matrix(kw, c, a)
    rows.append((4, imax(kernels.extended_matrix(kw, c, b) @ kernels.extended_matrix(kw, b, a) + K31), imax(K31)))
    main = ResultTable({"check": np.array([r[0] for r in rows]), "abs_err": np.array([r[1] for r in rows]),
                        "scale": np.array([r[2] for r in rows])})
    labels = ["projection", "commutator", "equal_angle", "semigroup_B", "semigroup_B_minus_1"]
    return ExperimentResult([main], {lab: r[1] for lab, r in zip(labels, rows)} | {"window": [kw.window.j_min, kw.window.j_max]})


@dataclass(frozen=True)
class TraceConfig:
    T_grid: tuple[float, ...] = (50.0, 100.0, 200.0, 400.0)
    M: float = 2.0


def exp_trace(cfg: TraceConfig, seed: int = 0, threads: int = 1) -> ExperimentResult:
    reps = kernels.trace_scan(cfg.T_grid, cfg.M)
    Ts = np.asarray(cfg.T_grid, dtype=float)
    tm = np.array([r.trace_matrix for r in reps])
    tc = np.array([r.trace_closed for r in reps])
    ts = np.array([r.stated_closed for r in reps])
    scaled = Ts ** (4.0 / 3.0) * np.abs(tm)
    main = ResultTable({"T": Ts, "trace_matrix": tm, "trace_closed": tc, "stated_closed": ts,
                        "err_closed": np.abs(tm - tc), "err_stated": np.abs(tm - ts), "scaled": scaled})
    band = float(scaled.max() / scaled.min()) if np.all(scaled > 0) else None
    return ExperimentResult([main], {"band": band})


@dataclass(frozen=True)
class EdgeConfig:
    T_grid: tuple[float, ...] = (50.0, 100.0, 200.0)
    s_min: float = -10.0
    s_max: float = 10.0
    s_step: float = 0.01


def exp_edge(cfg: EdgeConfig, seed: int = 0, threads: int = 1) -> ExperimentResult:
    n = int(round((cfg.s_max - cfg.s_min) / cfg.s_step))
    s = cfg.s_min + cfg.s_step * np.arange(n + 1)
    reps = [kernels.edge_bounds(T, s) for T in cfg.T_grid]
    main = ResultTable({"T": np.array(cfg.T_grid, dtype=float), "max_abs": np.array([r.max_abs for r in reps]),
                        "max_ratio": np.array([r.max_ratio for r in reps])})
    prof = ResultTable({"T": np.repeat(np.array(cfg.T_grid, dtype=float), s.size), "s": np.tile(s, len(reps)),
                        "value": np.concatenate([r.values for r in reps])}, "profile")
    return ExperimentResult([main, prof], {})


@dataclass(frozen=True)
class MultilayerConfig:
    runs: int = 500
    T_values: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    depth: int = 6
    queries: int = 10
    check: Literal["local", "full"] = "local"

    def __post_init__(self):
        if max(self.T_values) > 20:
            raise ValueError("multilayer checks run at T <= 20")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")


def exp_multilayer(cfg: MultilayerConfig, seed: int, threads: int = 1) -> ExperimentResult:
    """Ordering, top-line and nucleation/collision bookkeeping of the multilayer dynamics."""
    from ..png_sim import OrderingViolation

    streams = block_streams(seed, 0)

    def trial(i):
        T = cfg.T_values[i % len(cfg.T_values)]
        cloud = sample_region(DropletCone(T), 1.0, streams(i))
        events = cloud_events(cloud)
        sim = MultilayerSimulator(events, cfg.depth, check=cfg.check)
        violations = 0
        try:
            sim.advance(T)
            st = sim.state()
            st.check_ordering()
        except OrderingViolation:
            violations = 1
            st = sim.state()
        xs = np.linspace(-T, T, cfg.queries + 2)[1:-1]
        single = evolve_surface(StepConfiguration.flat(window=sim.engine.window), events, T)
        top = np.array([sim.heights(float(x))[0] for x in xs])
        mismatch = int(np.sum(top != single.height(xs)))
        nuc1 = st.nucleation_counts[1] if st.depth >= 1 else 0
        return (i, T, violations, mismatch, st.events_processed, st.collision_counts[0], nuc1)

    rows = map_trials(trial, cfg.runs, threads)
    names = ["run", "T", "violations", "top_mismatches", "events", "collisions_0", "nucleations_1"]
    main = ResultTable({n: np.array([r[k] for r in rows], dtype=float if n == "T" else np.int64)
                        for k, n in enumerate(names)})
    summary = {"violations": int(main["violations"].sum()), "top_mismatches": int(main["top_mismatches"].sum()),
               "count_mismatches": int(np.sum(main["collisions_0"] != main["nucleations_1"]))}
    return ExperimentResult([main], summary)


# --- registry ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    name: str
    schema: type
    run: object
    doc: str = field(default="")


EXPERIMENTS = {
    e.name: e
    for e in [
        Experiment("one_point", OnePointConfig, exp_one_point),
        Experiment("exponents", ExponentsConfig, exp_exponents),
        Experiment("slow_decorrelation", DecorrelationConfig, exp_slow_decorrelation),
        Experiment("spacelike", SpacelikeConfig, exp_spacelike),
        Experiment("stationary", StationaryConfig, exp_stationary),
        Experiment("moment_bound", MomentConfig, exp_moment_bound),
        Experiment("short_distance", ShortDistanceConfig, exp_short_distance),
        Experiment("surface", SurfaceConfig, exp_surface),
        Experiment("lpp_oracle", LppOracleConfig, exp_lpp_oracle),
        Experiment("dynamics", DynamicsConfig, exp_dynamics),
        Experiment("kernel_algebra", KernelAlgebraConfig, exp_kernel_algebra),
        Experiment("trace", TraceConfig, exp_trace),
        Experiment("edge", EdgeConfig, exp_edge),
        Experiment("multilayer", MultilayerConfig, exp_multilayer),
    ]
}
