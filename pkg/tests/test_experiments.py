"""Small-configuration runs of every registered experiment."""

import math

import numpy as np
import pytest
from scipy import stats

from png_lab.geometry import PathSpec
from png_lab.harness.acceptance import digests
from png_lab.harness.experiments import (
    EXPERIMENTS, DecorrelationConfig, DynamicsConfig, EdgeConfig, ExponentsConfig, KernelAlgebraConfig,
    LppOracleConfig, MomentConfig, MultilayerConfig, OnePointConfig, ShortDistanceConfig, SpacelikeConfig,
    StationaryConfig, SurfaceConfig, TraceConfig, decorrelation_stats, moment_pairs, ratio_trend, second_point,
    spacelike_points, strip_half_width)
from png_lab.kernels import gap_cdf

run = {name: e.run for name, e in EXPERIMENTS.items()}


def test_registry_names():
    assert set(EXPERIMENTS) == {"one_point", "exponents", "slow_decorrelation", "spacelike", "stationary",
                                "moment_bound", "short_distance", "surface", "lpp_oracle", "dynamics",
                                "kernel_algebra", "trace", "edge", "multilayer"}


# --- one-point -----------------------------------------------------------------------------


def test_one_point_zero_time():
    r = run["one_point"](OnePointConfig(T=0.0, trials=50), 1)
    assert np.all(r.table("trials")["h"] == 0)
    assert r.summary["mean"] == 0


def test_one_point_small_T_matches_oracle():
    r = run["one_point"](OnePointConfig(T=2.0, trials=4000), 5)
    assert r.summary["max_abs_z"] < 4.5
    assert abs(r.summary["mean_z"]) < 4.5
    np.testing.assert_allclose(r.main["exact_cdf"], gap_cdf(2.0, r.main["level"]), atol=1e-12)


def test_one_point_flat_and_stationary_have_no_oracle():
    for geo in ("flat", "stationary"):
        r = run["one_point"](OnePointConfig(geometry=geo, T=3.0, trials=40), 2)
        assert "exact_cdf" not in r.main.names()
        assert r.summary["mean"] > 0


def test_one_point_threads_identical():
    cfg = OnePointConfig(T=3.0, trials=100)
    assert digests(run["one_point"](cfg, 9, 1)) == digests(run["one_point"](cfg, 9, 3))
    assert digests(run["one_point"](cfg, 9, 1)) != digests(run["one_point"](cfg, 10, 1))


# --- exponents -----------------------------------------------------------------------------


def test_exponents_validation():
    with pytest.raises(ValueError):
        ExponentsConfig(geometry="flat")
    with pytest.raises(ValueError):
        ExponentsConfig(T_grid=(16.0, 32.0, 64.0))
    with pytest.raises(ValueError):
        ExponentsConfig(tau=1.0)
    with pytest.raises(ValueError):
        ExponentsConfig(trials=10, path_trials=20)


def test_strip_half_width():
    assert strip_half_width(8.0, 1.0, 0.0) == pytest.approx(4.0)


def test_exponents_small_run():
    cfg = ExponentsConfig(T_grid=(4.0, 8.0, 16.0, 32.0), trials=60, path_trials=30, bootstrap=50,
                          strip_check_T=32.0)
    r = run["exponents"](cfg, 3)
    assert r.summary["strip_discrepancies"] == 0
    assert np.all(np.diff(r.main["sd"]) > -1.0)
    assert 0 <= min(r.main["cross_any"]) and max(r.main["cross_any"]) <= 1
    ci = r.summary["fluct_ci"]
    assert ci[0] <= r.summary["fluct_slope"] <= ci[1]


# --- slow decorrelation ------------------------------------------------------------------------


def test_decorrelation_validation():
    with pytest.raises(ValueError):
        DecorrelationConfig(direction="fixed_x", xi=0.0)
    with pytest.raises(ValueError):
        DecorrelationConfig(direction="path", pi_prime=None)
    with pytest.raises(ValueError, match="characteristic"):
        DecorrelationConfig(direction="path", xi=0.5, pi_prime=1 / 0.5)
    with pytest.raises(ValueError):
        DecorrelationConfig(tau=0.0)
    with pytest.raises(ValueError):
        DecorrelationConfig(xi=1.0)
    DecorrelationConfig(direction="fixed_x", geometry="flat", xi=0.0)


def test_second_point_directions():
    T = 100.0
    assert second_point(DecorrelationConfig(xi=0.5), T, 0.5) == (0.5 * 110.0, 110.0)
    assert second_point(DecorrelationConfig(xi=0.5, direction="fixed_x"), T, 0.5) == (50.0, 110.0)
    assert second_point(DecorrelationConfig(geometry="flat", xi=0.5), T, 0.5) == (50.0, 110.0)
    assert second_point(DecorrelationConfig(xi=0.5, direction="path", pi_prime=0.5), T, 0.5) == (70.0, 110.0)


def test_decorrelation_stats_identical_inputs():
    h = np.random.default_rng(0).integers(10, 30, 200)
    st = decorrelation_stats(h, h, (0.0, 50.0), (0.0, 50.0), "droplet", 0.0, 50.0, 0.3, 100, 1)
    assert st["corr"] == 1.0 and st["mean_diff"] == 0.0 and st["sd_diff"] == 0.0
    assert st["p_within"] == 1.0 == st["p_within_raw"]


def test_slow_decorrelation_small_run():
    cfg = DecorrelationConfig(T_grid=(20.0, 40.0), trials=200, control_tau=1.0, offsets_u=(1.0,), bootstrap=100)
    r = run["slow_decorrelation"](cfg, 4)
    m = r.main
    assert m.rows == 6
    assert set(m["kind"].tolist()) == {0, 1, 2}
    assert np.all(m.where(kind=0)["corr"] > m.where(kind=1)["corr"])
    assert np.all((m["corr_lo"] <= m["corr"]) & (m["corr"] <= m["corr_hi"]))


# --- space-like paths ------------------------------------------------------------------------


def test_spacelike_validation():
    with pytest.raises(ValueError, match="characteristic"):
        SpacelikeConfig(xi=0.5, pi_prime_list=(2.0,))
    with pytest.raises(ValueError):
        SpacelikeConfig(xi=0.0)


def test_spacelike_points_effective_separation():
    cfg = SpacelikeConfig(xi=0.5, pi_prime_list=(0.0, 0.5), u_grid=(0.0, 1.0), T=64.0)
    for pp, s, up, x, t in spacelike_points(cfg):
        assert s == pytest.approx(up * PathSpec(0.5, pp).effective_factor)
        assert x - 32.0 == pytest.approx(up * 16.0)
        assert t - 64.0 == pytest.approx(pp * up * 16.0)


def test_spacelike_zero_separation_is_one():
    r = run["spacelike"](SpacelikeConfig(T=32.0, trials=150, u_grid=(0.0, 0.5), bootstrap=50), 6)
    z = r.main.where(u_eff=0.0)
    assert np.all(z["corr"] == 1.0)
    assert np.all(r.main.where(u_eff=0.5)["corr"] < 1.0)


# --- stationary --------------------------------------------------------------------------------


def test_stationary_zero_L():
    r = run["stationary"](StationaryConfig(T=5.0, L=0.0, trials=20, repeats=2, L_grid=(4.0,), sd_trials=20), 2)
    assert np.all(r.main["ks"] == 0) and np.all(r.main["p_value"] == 1)
    assert np.all(r.main["mean_increment"] == 0)


def test_stationary_small_run():
    r = run["stationary"](StationaryConfig(T=10.0, L=5.0, trials=300, repeats=2, L_grid=(4.0, 8.0, 16.0),
                                           sd_trials=100, bootstrap=50), 8)
    assert np.all(r.main["p_value"] > 1e-4)
    assert abs(r.summary["rate_error_at_max_L"]) < 0.1
    assert "sd_slope" in r.summary


def test_stationary_validation():
    with pytest.raises(ValueError):
        StationaryConfig(L=-1.0)
    with pytest.raises(ValueError):
        StationaryConfig(L_grid=(0.0,))


# --- moments -----------------------------------------------------------------------------------


def test_moment_grid_and_validation():
    g = MomentConfig(T=8.0).grid()
    assert g[0] == -1.0 and g[-1] == 1.0 and len(g) == 9
    with pytest.raises(ValueError):
        MomentConfig(T=8.0, u_grid=(0.0, 0.1))
    with pytest.raises(ValueError):
        MomentConfig(T=8.0, u_grid=(0.0, 2.0))
    with pytest.raises(ValueError):
        MomentConfig(T=8.0, u_grid=(0.5, 1.0))


def test_moment_pairs():
    cfg = MomentConfig(T=8.0, u_grid=(-0.5, 0.0, 0.5))
    assert moment_pairs(cfg, cfg.grid()) == [(1, 0), (1, 2)]
    cfg = MomentConfig(T=8.0, u_grid=(-0.5, 0.0, 0.5), pairs="all")
    assert moment_pairs(cfg, cfg.grid()) == [(0, 1), (0, 2), (1, 2)]


def test_ratio_trend():
    du = np.array([0.1, 0.2, 0.4, 0.8])
    band, slope = ratio_trend(du, 3 * du**0.5)
    assert band == pytest.approx(8**0.5) and slope == pytest.approx(0.5)
    assert ratio_trend(du, np.zeros(4))[0] == math.inf


def test_moment_bound_small_run():
    cfg = MomentConfig(T=8.0, u_grid=(-0.5, 0.0, 0.5), trials=40, depth=4)
    r = run["moment_bound"](cfg, 3)
    assert r.main.rows == 2
    assert np.all(r.main["moment"] >= 0)
    assert r.table("eta").rows == 120


# --- short distance ----------------------------------------------------------------------------


def test_short_distance_zero_area():
    r = run["short_distance"](ShortDistanceConfig(T=64.0, trials=100, area=0.0, k_max=3), 1)
    assert r.summary["max_count"] == 0
    assert r.main.where(k=0)["emp_tail"][0] == 1.0
    assert np.all(r.main.where(k=1)["emp_tail"] == 0)


def test_short_distance_large_T_threshold():
    r = run["short_distance"](ShortDistanceConfig(T=31.0**6, trials=2000, k_max=3), 2)
    assert r.summary["k_T"] == 31
    assert r.summary["emp_at_k_T"] == 0.0


def test_short_distance_poisson_tail():
    r = run["short_distance"](ShortDistanceConfig(T=64.0, trials=5000, area=1.5, k_max=6), 3)
    np.testing.assert_allclose(r.main["exact_tail"], stats.poisson.sf(r.main["k"] - 1, 1.5))
    assert r.summary["max_abs_z"] < 4.0


# --- surface -----------------------------------------------------------------------------------


def test_surface_small_run():
    r = run["surface"](SurfaceConfig(T=20.0, trials=120, u_grid=(0.0, 0.5), v_grid=(0.0, 0.2), bootstrap=50), 1)
    assert r.main.rows == 4
    assert r.main.where(u=0.0, v=0.0)["corr"][0] == 1.0


def test_surface_rejects_outside_cone():
    with pytest.raises(ValueError):
        run["surface"](SurfaceConfig(T=8.0, u_grid=(3.0,), v_grid=(0.0,), trials=10), 1)


# --- library checks ----------------------------------------------------------------------------


def test_lpp_oracle_small_run():
    r = run["lpp_oracle"](LppOracleConfig(clouds=60, n_max=7), 1)
    assert r.summary["mismatches"] == 0
    assert set(r.main["kind"].tolist()) == {0, 1, 2}


def test_dynamics_small_run():
    r = run["dynamics"](DynamicsConfig(seeds=10, T_max=5.0, queries=5), 1)
    assert r.summary["mismatches"] == 0


def test_kernel_algebra_small():
    r = run["kernel_algebra"](KernelAlgebraConfig(T=6.0, interior_margin=20, theta_scaled=(0.0, 0.2, 0.4)))
    with pytest.raises(ValueError):
        KernelAlgebraConfig(theta_scaled=(0.0, 0.4))
    s = r.summary
    assert s["projection"] < 1e-8 and s["commutator"] < 1e-8 and s["equal_angle"] < 1e-8


def test_trace_small():
    r = run["trace"](TraceConfig(T_grid=(20.0, 40.0)))
    assert np.all(r.main["err_closed"] < 1e-8)
    assert np.all(r.main["trace_matrix"] < 0)


def test_edge_small():
    r = run["edge"](EdgeConfig(T_grid=(50.0,), s_min=-2.0, s_max=2.0, s_step=0.5))
    assert r.tables[1].rows == 9
    assert np.all(r.main["max_abs"] <= 1.0)


def test_multilayer_small():
    r = run["multilayer"](MultilayerConfig(runs=8, T_values=(5.0,), depth=3, queries=4, check="full"), 1)
    assert r.summary == {"violations": 0, "top_mismatches": 0, "count_mismatches": 0}


def test_multilayer_validation():
    with pytest.raises(ValueError):
        MultilayerConfig(T_values=(30.0,))
    with pytest.raises(ValueError):
        MultilayerConfig(depth=0)
