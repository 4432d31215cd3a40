import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from png_lab.sampling import (
    DropletCone,
    LineToPoint,
    PointCloud,
    Rect,
    RngStream,
    Strip,
    read_cloud_csv,
    sample_line_steps,
    sample_region,
    substream,
    write_cloud_csv,
)


def _counts(region, n_seeds, seed=11):
    return np.array([len(sample_region(region, 1.0, substream(seed, i))) for i in range(n_seeds)])


def test_empty_region():
    assert len(sample_region(Rect(0, 0, 0, 5), 1.0, substream(1, 0))) == 0


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        sample_region(Rect(0, 1, 0, 1), 0.0, substream(1, 0))
    with pytest.raises(ValueError):
        sample_region(Rect(0, np.inf, 0, 1), 1.0, substream(1, 0))
    with pytest.raises(ValueError):
        RngStream(-1, 0)


def test_poisson_count_law():
    counts = _counts(Rect(0, 10, 0, 10), 10_000)
    assert abs(counts.mean() - 100) <= 4 * (100 / 1e4) ** 0.5
    # chi-square against Poisson(100) on bins with enough mass
    edges = np.concatenate([[-0.5], np.arange(75.5, 126, 3.0), [np.inf]])
    obs = np.histogram(counts, edges)[0]
    cdf = stats.poisson.cdf(np.floor(edges[1:]), 100) - stats.poisson.cdf(np.floor(edges[:-1]), 100)
    cdf[0] = stats.poisson.cdf(75, 100)
    exp = cdf / cdf.sum() * counts.size
    assert stats.chisquare(obs, exp).pvalue > 1e-3


@pytest.mark.parametrize("region", [DropletCone(4.0), Strip(1.5, 6.0, 7.0), LineToPoint(3.0, 2.0)])
def test_region_counts_match_area(region):
    counts = _counts(region, 4000, seed=5)
    mu = region.area
    assert abs(counts.mean() - mu) <= 4 * (mu / counts.size) ** 0.5


@pytest.mark.parametrize("region", [Rect(1, 4, -2, 3), DropletCone(3.0), Strip(1.0, 5.0, 4.0), LineToPoint(2.0, 3.0)])
def test_points_inside_and_sorted(region):
    for i in range(20):
        c = sample_region(region, 2.0, substream(9, i))
        assert np.all(region.contains(c.u, c.v))
        order = np.lexsort((c.v, c.u))
        assert np.array_equal(order, np.arange(len(c)))


def test_rect_uniform_marginals():
    us, vs = [], []
    for i in range(200):
        c = sample_region(Rect(0, 2, 0, 5), 1.0, substream(3, i))
        us.append(c.u / 2)
        vs.append(c.v / 5)
    assert stats.kstest(np.concatenate(us), "uniform").pvalue > 1e-3
    assert stats.kstest(np.concatenate(vs), "uniform").pvalue > 1e-3


def test_cone_marginal():
    # u on the triangle u, v >= 0, u + v <= 2T has density (2T - u) / (2 T^2)
    T = 3.0
    u = np.concatenate([sample_region(DropletCone(T), 1.0, substream(4, i)).u for i in range(300)])
    cdf = lambda s: 1 - (1 - s / (2 * T)) ** 2  # noqa: E731
    assert stats.kstest(u, cdf).pvalue > 1e-3


def test_strip_area_against_monte_carlo():
    s = Strip(0.7, 3.0, 5.0)
    rng = np.random.default_rng(2)
    u, v = rng.uniform(0, 3, 10**6), rng.uniform(0, 5, 10**6)
    assert s.area == pytest.approx(15 * np.mean(np.abs(u - v) <= 1.4), rel=5e-3)


def test_deterministic_and_injective():
    a = sample_region(Rect(0, 5, 0, 5), 1.0, substream(42, 7))
    b = sample_region(Rect(0, 5, 0, 5), 1.0, substream(42, 7))
    assert a.u.tobytes() == b.u.tobytes() and a.v.tobytes() == b.v.tobytes()
    draws = {substream(42, i).generator().random(4).tobytes() for i in range(1000)}
    assert len(draws) == 1000
    assert substream(42, 1) == substream(42, 1) and substream(42, 1) != substream(42, 2)


def test_adjacent_streams_uncorrelated():
    x = np.array([substream(8, i).generator().random(1000) for i in range(1001)])
    r = np.array([np.corrcoef(x[i], x[i + 1])[0, 1] for i in range(1000)])
    assert np.max(np.abs(r)) < 0.15
    assert abs(np.corrcoef(x[:-1, 0], x[1:, 0])[0, 1]) < 0.05


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), max_size=30))
def test_cloud_sorted_on_construction(points):
    c = PointCloud.from_points(points)
    keys = list(zip(c.u, c.v))
    assert keys == sorted(keys)
    assert sorted(map(tuple, np.asarray(points, dtype=float).reshape(-1, 2).tolist())) == keys


def test_cloud_read_only():
    c = sample_region(Rect(0, 3, 0, 3), 1.0, substream(1, 1))
    with pytest.raises(ValueError):
        c.u[0] = 1.0


def test_csv_round_trip(tmp_path):
    c = sample_region(Rect(0, 4, 0, 4), 1.0, substream(6, 0))
    path = tmp_path / "c.csv"
    write_cloud_csv(c, path)
    assert path.read_text().splitlines()[0] == "u,v"
    d = read_cloud_csv(path)
    assert np.array_equal(c.u, d.u) and np.array_equal(c.v, d.v)


def test_csv_header_checked(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,t\n1,2\n")
    with pytest.raises(ValueError):
        read_cloud_csv(p)


def test_line_steps_density():
    n = [sum(map(len, sample_line_steps(substream(2, i), 50.0))) for i in range(500)]
    assert np.mean(n) == pytest.approx(200, abs=4 * (200 / 500) ** 0.5)
