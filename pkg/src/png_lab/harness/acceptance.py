"""Acceptance criteria: one configuration file and one evaluator per criterion.

``run_criterion(n)`` executes the experiment behind criterion ``n`` and returns the
individual checks with their measured values. Criterion 15 reruns 1..14 under two
thread counts and compares the result digests.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .experiments import EXPERIMENTS
from .runner import ExperimentResult

CRITERIA = tuple(range(1, 16))


@dataclass(frozen=True)
class Check:
    label: str
    passed: bool
    detail: str
    expected_failure: bool = False


@dataclass
class CriterionOutcome:
    number: int
    checks: list
    seconds: float
    digests: dict = field(default_factory=dict)
    result: ExperimentResult | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(f"[{status}] #{self.number} {c.label}: {c.detail}")
        return out


def config_path(n: int) -> Path:
    return Path(str(resources.files("png_lab.harness") / "configs" / f"accept_{n:02d}.cfg"))


def thresholds() -> dict[str, float]:
    raw = cfgmod.parse_text((resources.files("png_lab.harness") / "thresholds.cfg").read_text())
    return {k: float(v) for k, v in raw.items()}


def load(n: int):
    raw = cfgmod.read_file(config_path(n))
    exp = EXPERIMENTS[raw["experiment"]]
    seed = int(raw["seed"])
    cfg = cfgmod.build(exp.schema, raw, ignore=("experiment", "seed"))
    return exp, cfg, seed


def digests(result: ExperimentResult) -> dict[str, str]:
    return {t.name: hashlib.sha256(t.to_csv_text().encode()).hexdigest() for t in result.tables}


# Criteria whose trial count cannot fit the stated budget without parallel cores;
# measured single-core times are recorded with the thresholds.
SINGLE_CORE_OVER_BUDGET = frozenset({11})


def _timed(label, seconds, limit, expected_failure=False):
    cores = os.cpu_count() or 1
    return Check(label, seconds <= limit, f"{seconds:.1f} s (limit {limit:.0f} s, {cores} core(s))", expected_failure)


def runtime_expected_to_fail(n: int) -> bool:
    return n in SINGLE_CORE_OVER_BUDGET and (os.cpu_count() or 1) == 1


def _monotone(vals, increasing=True, strict=True) -> bool:
    d = np.diff(np.asarray(vals, dtype=float))
    if not increasing:
        d = -d
    return bool(np.all(d > 0) if strict else np.all(d >= 0))


def _fmt(vals, p=3) -> str:
    return "[" + ", ".join(f"{v:.{p}g}" for v in vals) + "]"


# --- evaluators -------------------------------------------------------------------


def _c01(r, th, sec):
    m = r.summary["mismatches"]
    return [Check("LPP oracle equivalence", m == 0, f"{m} mismatches over {r.summary['cases']} clouds")]


def _c02(r, th, sec):
    m = r.summary["mismatches"]
    return [Check("dynamics equals LPP", m == 0, f"{m} mismatches over {r.main.rows} queries")]


def _c03(r, th, sec):
    z = r.summary["max_abs_z"]
    return [Check("exact one-point law", z <= th["c03_z"],
                  f"max |z| = {z:.2f} over {r.summary['levels_checked']} levels (limit {th['c03_z']:g})")]


def _c04(r, th, sec):
    s = r.summary
    return [
        Check("B^2 = B", s["projection"] <= th["c04_tol_projection"], f"{s['projection']:.2e}"),
        Check("[H, B] = 0", s["commutator"] <= th["c04_tol_commutator"], f"{s['commutator']:.2e}"),
        Check("equal-angle extended kernel = B", s["equal_angle"] <= th["c04_tol_equal_angle"], f"{s['equal_angle']:.2e}"),
        Check("semigroup composition", max(s["semigroup_B"], s["semigroup_B_minus_1"]) <= th["c04_tol_semigroup"],
              f"{s['semigroup_B']:.2e} (B branch), {s['semigroup_B_minus_1']:.2e} (B-1 branch)"),
    ]


def _c05(r, th, sec):
    t = r.main.where(T=100.0)
    es, ec = float(t["err_stated"][0]), float(t["err_closed"][0])
    tol = th["c05_tol_identity"]
    band = r.summary["band"]
    return [
        Check("trace equals closed form as written, no sign", es <= tol,
              f"|Tr - 2 sum| = {es:.2e} at T=100 (trace {float(t['trace_matrix'][0]):.3e})", expected_failure=True),
        Check("trace equals sign-corrected closed form", ec <= tol, f"|Tr + 2 sum| = {ec:.2e} at T=100"),
        Check("T^(4/3)|Tr| within factor-2 band", band is not None and band <= th["c05_band"],
              f"values {_fmt(r.main['scaled'])}, band {band:.3f}"),
    ]


def _c06(r, th, sec):
    ma, mr = r.main["max_abs"], r.main["max_ratio"]
    return [Check("edge sup bound", bool(np.all(ma <= th["c06_max_abs"])), f"max |.| = {_fmt(ma)}"),
            Check("edge ratio to exp(-s/2)", bool(np.all(mr <= th["c06_max_ratio"])), f"ratios {_fmt(mr)}")]


def _c07(r, th, sec):
    s, ci = r.summary["fluct_slope"], r.summary["fluct_ci"]
    return [Check("fluctuation exponent", th["c07_slope_lo"] <= s <= th["c07_slope_hi"],
                  f"slope {s:.4f}, 95% CI [{ci[0]:.3f}, {ci[1]:.3f}], sd {_fmt(r.main['sd'])}")]


def _c08(r, th, sec):
    s, ci = r.summary["transversal_slope"], r.summary["transversal_ci"]
    cross = r.main["cross_any"]
    return [
        Check("transversal exponent", th["c08_slope_lo"] <= s <= th["c08_slope_hi"],
              f"slope {s:.4f}, 95% CI [{ci[0]:.3f}, {ci[1]:.3f}], median deviation {_fmt(r.main['median_dev'])}"),
        Check("cylinder crossing frequency decreasing in T", _monotone(cross, increasing=False),
              f"any {_fmt(cross)}", expected_failure=True),
        Check("cylinder crossing frequency non-increasing in T", _monotone(cross, increasing=False, strict=False),
              f"leftmost {_fmt(r.main['cross_left'])}, rightmost {_fmt(r.main['cross_right'])}"),
    ]


def _c09(r, th, sec):
    m = r.main
    main, ctrl = m.where(kind=0), m.where(kind=1)
    c = main["corr"]
    p = main["p_within_raw"]
    return [
        Check("correlation increasing in T", _monotone(c), f"corr {_fmt(c, 4)}"),
        Check("correlation at largest T above floor", float(c[-1]) >= th["c09_corr_floor"],
              f"{float(c[-1]):.4f} >= {th['c09_corr_floor']:g}"),
        Check("tau = 1 control strictly smaller", bool(np.all(ctrl["corr"] < c)), f"control {_fmt(ctrl['corr'], 4)}"),
        Check("P(|difference| <= T^beta) increasing", _monotone(p), f"{_fmt(p, 4)}"),
    ]


def _c10(r, th, sec):
    m = r.main
    main, off = m.where(kind=0), m.where(kind=2)
    c = main["corr"]
    sep = bool(np.all(off["corr_hi"] < main["corr_lo"]))
    return [
        Check("vertical-line correlation at largest T above floor", float(c[-1]) >= th["c10_corr_floor"],
              f"corr {_fmt(c, 4)}, floor {th['c10_corr_floor']:g}", expected_failure=True),
        Check("displaced correlation lower with separated CIs", sep,
              f"displaced {_fmt(off['corr'], 4)}, CI upper {_fmt(off['corr_hi'], 4)} < vertical CI lower {_fmt(main['corr_lo'], 4)}"),
    ]


def _c11(r, th, sec):
    s = r.summary
    ps = r.main["p_value"]
    npass = int(np.sum(ps > th["c11_ks_p"]))
    slope, rate = s["sd_slope"], s["rate_error_at_max_L"]
    return [
        Check("KS increments vs independent", npass >= th["c11_ks_min_pass"],
              f"{npass}/{ps.size} repeats with p > {th['c11_ks_p']:g}, p = {_fmt(ps, 2)}"),
        Check("sd exponent", abs(slope - th["c11_sd_slope"]) <= th["c11_sd_tol"],
              f"slope {slope:.4f}, CI [{s['sd_ci'][0]:.3f}, {s['sd_ci'][1]:.3f}]"),
        Check("mean rate", abs(rate) <= th["c11_rate_tol"], f"|mean/(2L) - 1| = {abs(rate):.4f} at largest L"),
    ]


def _c12(r, th, sec):
    m = r.main
    pps = np.unique(m["pi_prime"])
    ok, parts = True, []
    for u in np.unique(m["u_eff"]):
        sub = m.where(u_eff=float(u))
        lo, hi = float(np.max(sub["corr_lo"])), float(np.min(sub["corr_hi"]))
        ok &= lo <= hi
        parts.append(f"u={u:g}: " + "/".join(f"{c:.3f}" for c in sub["corr"]))
    return [Check("matched effective separations agree", bool(ok),
                  f"pi' = {_fmt(pps)}; " + "; ".join(parts))]


def _c13(r, th, sec):
    s = r.summary
    return [
        Check("strict line ordering", s["violations"] == 0, f"{s['violations']} runs with violations"),
        Check("top line equals single-layer", s["top_mismatches"] == 0, f"{s['top_mismatches']} mismatches"),
        Check("level -1 nucleations = level 0 collisions", s["count_mismatches"] == 0,
              f"{s['count_mismatches']} runs differ"),
    ]


def _c14(r, th, sec):
    band, slope = r.summary["band"], r.summary["slope"]
    return [
        Check("moment ratio band", band is not None and band <= th["c14_band"],
              f"max/min ratio {band:.2f} (limit {th['c14_band']:g})"),
        Check("no trend of the ratio in du", slope is not None and abs(slope) <= th["c14_slope"],
              f"log-log slope {slope:.3f} (limit {th['c14_slope']:g}), ratios {_fmt(r.main['ratio'])}",
              expected_failure=True),
    ]


EVALUATORS = {1: _c01, 2: _c02, 3: _c03, 4: _c04, 5: _c05, 6: _c06, 7: _c07, 8: _c08, 9: _c09, 10: _c10,
              11: _c11, 12: _c12, 13: _c13, 14: _c14}


def run_criterion(n: int, threads: int = 1) -> CriterionOutcome:
    if n == 15:
        return reproducibility(threads=(threads, threads + 1))
    if n not in EVALUATORS:
        raise KeyError(f"no acceptance criterion {n}")
    exp, cfg, seed = load(n)
    t0 = time.perf_counter()
    res = exp.run(cfg, seed, threads)
    sec = time.perf_counter() - t0
    th = thresholds()
    budget = _timed("runtime", sec, th[f"c{n:02d}_max_seconds"], runtime_expected_to_fail(n))
    checks = EVALUATORS[n](res, th, sec) + [budget]
    return CriterionOutcome(n, checks, sec, digests(res), res)


def reproducibility(criteria=tuple(range(1, 15)), threads=(1, 2), reference: dict | None = None) -> CriterionOutcome:
    """Rerun each criterion's configuration under other thread counts and compare digests.

    ``reference`` maps criterion numbers to digests already obtained (e.g. from a
    previous acceptance pass at ``threads[0]``); missing ones are computed.
    """
    reference = dict(reference or {})
    checks = []
    t0 = time.perf_counter()
    for n in criteria:
        exp, cfg, seed = load(n)
        if n not in reference:
            reference[n] = digests(exp.run(cfg, seed, threads[0]))
        for th in threads[1:]:
            d = digests(exp.run(cfg, seed, th))
            same = d == reference[n]
            checks.append(Check(f"criterion {n} tables identical at {threads[0]} and {th} threads", same,
                                ", ".join(f"{k} {v[:12]}" for k, v in d.items())))
    return CriterionOutcome(15, checks, time.perf_counter() - t0)
