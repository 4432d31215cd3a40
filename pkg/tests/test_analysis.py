import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from png_lab.analysis import (
    EmpiricalDistribution,
    binomial_se,
    central_moments,
    fit_exponent,
    ks_two_sample,
    pearson,
)
from png_lab.sampling import substream

samples = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40)


def test_empirical_distribution():
    d = EmpiricalDistribution([3.0, 1.0, 2.0, 2.0])
    assert d.samples.tolist() == [1, 2, 2, 3] and d.sorted
    assert d.cdf([0.5, 2.0, 3.0]).tolist() == [0.0, 0.75, 1.0]
    with pytest.raises(ValueError):
        EmpiricalDistribution([1.0, np.nan])


def test_ks_trivial_cases():
    a = np.arange(20.0)
    assert ks_two_sample(a, a)[0] == 0.0
    assert ks_two_sample(a, a + 100)[0] == 1.0
    with pytest.raises(ValueError):
        ks_two_sample([], a)


def test_ks_against_scipy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=300), rng.normal(0.1, size=200)
    ref = stats.ks_2samp(a, b, method="asymp")
    assert ks_two_sample(a, b) == pytest.approx((ref.statistic, ref.pvalue))


def test_ks_same_law_self_test():
    ps = []
    for i in range(100):
        a = substream(123, 2 * i).generator().random(10_000)
        b = substream(123, 2 * i + 1).generator().random(10_000)
        ps.append(ks_two_sample(a, b)[1])
    assert np.mean(np.array(ps) > 1e-3) >= 0.99


def test_pearson_trivial():
    x = np.linspace(0, 1, 50)
    r, ci = pearson(np.column_stack([x, x]), bootstrap=200)
    assert r == pytest.approx(1.0) and ci[0] == pytest.approx(1.0)
    assert pearson(np.column_stack([x, -x]), bootstrap=0)[0] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        pearson(np.ones((20, 2)))
    with pytest.raises(ValueError):
        pearson(np.column_stack([x[:9], x[:9]]))


def test_pearson_independent_streams():
    x = substream(5, 0).generator().normal(size=1000)
    y = substream(5, 1).generator().normal(size=1000)
    r, (lo, hi) = pearson(np.column_stack([x, y]))
    assert abs(r) < 0.1 and lo <= r <= hi


def test_pearson_ci_shrink_rate():
    rng = np.random.default_rng(7)

    def width(n):
        x = rng.normal(size=n)
        y = 0.6 * x + 0.8 * rng.normal(size=n)
        r, (lo, hi) = pearson(np.column_stack([x, y]), bootstrap=1000, seed=n)
        assert lo <= r <= hi
        return hi - lo

    ratio = width(400) / width(1600)
    assert 1.5 < ratio < 2.7  # ~ sqrt(4)


def test_pearson_deterministic():
    x = np.random.default_rng(1).normal(size=(100, 2))
    assert pearson(x, seed=3) == pearson(x, seed=3)


def test_fit_exact_power_law():
    T = np.array([64, 128, 256, 512.0])
    f = fit_exponent(np.column_stack([T, 3.2 * T ** (1 / 3)]))
    assert abs(f.slope - 1 / 3) < 1e-12 and f.intercept == pytest.approx(np.log(3.2))


def test_fit_noisy_five_decades():
    rng = np.random.default_rng(11)
    x = np.logspace(0, 5, 12)
    y = 2 * x**0.66 * (1 + 0.1 * rng.normal(size=x.size))
    f = fit_exponent(np.column_stack([x, y]))
    assert abs(f.slope - 0.66) < 0.05 and f.ci95[0] < f.slope < f.ci95[1]


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 0), (3, 3)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2), (4, 3)], samples=[[1.0]] * 3)


def test_fit_bootstrap_over_trials():
    rng = np.random.default_rng(2)
    T = np.array([64, 128, 256, 512.0])
    data = [rng.normal(0, t ** (1 / 3), 800) for t in T]
    pts = np.column_stack([T, [np.std(d, ddof=1) for d in data]])
    f = fit_exponent(pts, samples=data, statistic=lambda s: np.std(s, ddof=1), bootstrap=300)
    assert f.ci95[0] < 1 / 3 < f.ci95[1]


@given(st.floats(1e-3, 1e3))
def test_fit_scale_equivariant(c):
    pts = np.array([[1.0, 2.0], [3.0, 5.0], [9.0, 7.0], [27.0, 20.0]])
    a = fit_exponent(pts)
    b = fit_exponent(pts * [1.0, c])
    assert b.slope == pytest.approx(a.slope, abs=1e-12)
    assert b.intercept - a.intercept == pytest.approx(np.log(c), abs=1e-10)


def test_central_moments_examples():
    assert central_moments(np.full(10, 4.0))[1] == 0.0
    alt = np.array([1.0, -1.0] * 50)
    assert central_moments(alt, ddof=0)[1] == 1.0
    z = substream(9, 9).generator().normal(size=200_000)
    m4 = central_moments(z)[3]
    se = np.sqrt(np.var(z**4) / z.size)
    assert abs(m4 - 3) < 4 * se
    with pytest.raises(ValueError):
        central_moments([1.0])
    with pytest.raises(ValueError):
        central_moments([1.0, 2.0], k=5)


@given(samples, st.randoms(use_true_random=False))
def test_estimators_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert central_moments(ys) == pytest.approx(central_moments(xs), rel=1e-9, abs=1e-6)
    assert np.array_equal(EmpiricalDistribution(xs).samples, EmpiricalDistribution(ys).samples)


def test_binomial_se():
    assert binomial_se(0.5, 100) == pytest.approx(0.05)
    assert binomial_se(0.0, 10) == 0.0
