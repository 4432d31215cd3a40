import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from png_lab.geometry import xi_map_percolation
from png_lab.lpp import (
    CylinderSpec,
    LppResult,
    brute_force_chain,
    chain_lengths,
    crosses_cylinder,
    cylinder_nu,
    longest_chain,
    longest_chain_line_to_point,
    maximizer_path,
)
from png_lab.sampling import PointCloud, Rect, sample_region, substream

# integer coordinates make ties (shared u or v, repeated points) common
grid_pts = st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=10)
real_pts = st.lists(st.tuples(st.floats(-3, 8), st.floats(-3, 8)), max_size=10)


def enumerate_chains(points, source, target):
    """Longest chain by checking every subset (independent of the DP oracle)."""
    feas = [p for p in points if source[0] <= p[0] <= target[0] and source[1] <= p[1] <= target[1]]
    for k in range(len(feas), 0, -1):
        for sub in itertools.combinations(sorted(feas), k):
            if all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(sub, sub[1:])):
                return k
    return 0


def test_trivial_clouds():
    empty = PointCloud.from_points([])
    r = longest_chain(empty, (0, 0), (3, 3))
    assert r.length == 0 and r.maximizer.size == 0
    assert longest_chain_line_to_point(empty, (1, 1)).length == 0
    assert longest_chain(PointCloud.from_points([(1, 1)]), (0, 0), (2, 2)).length == 1


def test_small_example():
    c = PointCloud.from_points([(1, 2), (2, 1), (3, 3)])
    assert longest_chain(c, (0, 0), (4, 4)).length == 2
    assert enumerate_chains([(1, 2), (2, 1), (3, 3)], (0, 0), (4, 4)) == 2


def test_collinear():
    c = PointCloud.from_points([(i, i) for i in range(1, 6)])
    assert brute_force_chain(c, (0, 0), (6, 6)) == 5
    assert longest_chain(c, (0, 0), (6, 6)).length == 5


def test_closed_rectangle_and_ties():
    c = PointCloud.from_points([(0, 0), (0, 1), (1, 1), (1, 1), (2, 0)])
    # corners count; horizontal, vertical and repeated links are allowed
    assert longest_chain(c, (0, 0), (1, 1)).length == 4
    assert longest_chain(c, (0, 0), (2, 1)).length == 4
    assert brute_force_chain(c, (0, 0), (2, 1)) == 4


@given(grid_pts, st.tuples(st.integers(0, 6), st.integers(0, 6)))
def test_oracle_equivalence_with_ties(points, target):
    c = PointCloud.from_points(points)
    n = longest_chain(c, (0, 0), target).length
    assert n == brute_force_chain(c, (0, 0), target) == enumerate_chains(points, (0, 0), target)


@given(real_pts, st.tuples(st.floats(-1, 8), st.floats(-1, 8)))
def test_line_to_point_oracle(points, target):
    if target[0] + target[1] < 0:
        return
    c = PointCloud.from_points(points)
    assert longest_chain_line_to_point(c, target).length == brute_force_chain(c, None, target)


def test_random_clouds_against_oracle():
    for i in range(300):
        s = substream(77, i).generator()
        n = int(s.integers(0, 11))
        pts = s.uniform(0, 4, (n, 2))
        c = PointCloud.from_points(pts)
        assert longest_chain(c, (0, 0), (4, 4)).length == brute_force_chain(c, (0, 0), (4, 4))


@given(real_pts)
def test_line_dominates_point(points):
    c = PointCloud.from_points(points)
    assert longest_chain_line_to_point(c, (8, 8)).length >= longest_chain(c, (0, 0), (8, 8)).length


@given(real_pts, st.floats(0, 8), st.floats(0, 8), st.floats(0, 3), st.floats(0, 3))
def test_monotone_in_target(points, u, v, du, dv):
    c = PointCloud.from_points(points)
    assert longest_chain(c, (0, 0), (u + du, v + dv)).length >= longest_chain(c, (0, 0), (u, v)).length


@given(real_pts, st.floats(0, 1), st.floats(0, 1))
def test_superadditive(points, a, b):
    c = PointCloud.from_points(points)
    O, B = (-3.0, -3.0), (8.0, 8.0)
    A = (-3 + 11 * a, -3 + 11 * b)
    assert longest_chain(c, O, A).length + longest_chain(c, A, B).length <= longest_chain(c, O, B).length + (
        sum(1 for p in points if p == A)
    )


@given(st.lists(st.tuples(st.floats(0.01, 5), st.floats(0.01, 5)), max_size=9), st.floats(0.5, 9.5))
def test_separating_cut(points, level):
    """L(O,B) = max over s on the cut {u+v = level} of L(O,s) + L(s,B)."""
    c = PointCloud.from_points(points)
    O, B = (0.0, 0.0), (5.0, 5.0)
    nodes = [O] + [tuple(p) for p in c.points()] + [B]
    cut = []
    for p, q in itertools.product(nodes, nodes):
        sp, sq = p[0] + p[1], q[0] + q[1]
        if p[0] <= q[0] and p[1] <= q[1] and sp <= level <= sq and sq > sp:
            lam = (level - sp) / (sq - sp)
            cut.append((p[0] + lam * (q[0] - p[0]), p[1] + lam * (q[1] - p[1])))
    total = longest_chain(c, O, B).length
    best = 0
    for s in cut:
        on_s = sum(1 for p in points if p == s)
        best = max(best, longest_chain(c, O, s).length + longest_chain(c, s, B).length - on_s)
    assert best == total


@given(real_pts, st.floats(-0.9, 0.9))
def test_xi_map_invariance(points, xi):
    c = PointCloud.from_points(points)
    u, v = xi_map_percolation(c.u, c.v, xi)
    (su, tu), (sv, tv) = xi_map_percolation([-3.0, 8.0], [-3.0, 8.0], xi)
    mapped = PointCloud(u, v)
    assert longest_chain(mapped, (su, sv), (tu, tv)).length == longest_chain(c, (-3, -3), (8, 8)).length


def test_errors():
    c = PointCloud.from_points([(1, 1)])
    with pytest.raises(ValueError):
        longest_chain(c, (2, 2), (1, 3))
    big = PointCloud.from_points([(i, i) for i in range(21)])
    with pytest.raises(ValueError):
        brute_force_chain(big, (0, 0), (30, 30))
    with pytest.raises(ValueError):
        chain_lengths(c, [0.5], [3.0], source=(1.0, 1.0))


def test_chain_lengths_batch():
    c = sample_region(Rect(0, 30, 0, 30), 1.0, substream(3, 3))
    rng = np.random.default_rng(1)
    tu, tv = rng.uniform(0, 30, (2, 40))
    batch = chain_lengths(c, tu, tv)
    assert [longest_chain(c, (0, 0), (a, b)).length for a, b in zip(tu, tv)] == batch.tolist()
    line = chain_lengths(c, tu, tv, line=True)
    assert [longest_chain_line_to_point(c, (a, b)).length for a, b in zip(tu, tv)] == line.tolist()


@given(real_pts)
def test_maximizer_properties(points):
    c = PointCloud.from_points(points)
    for rule in ("leftmost", "rightmost"):
        r = maximizer_path(c, (-3, -3), (8, 8), rule)
        m = r.maximizer
        assert len(m) == r.length == longest_chain(c, (-3, -3), (8, 8)).length
        assert np.all(np.diff(m[:, 0]) >= 0) and np.all(np.diff(m[:, 1]) >= 0)
        assert np.all(m <= 8) and np.all(m >= -3)
        assert r.excursion() >= 0


def test_maximizer_unique_and_deterministic():
    c = PointCloud.from_points([(1, 1), (2, 2), (3, 3), (1.5, 0.2), (0.2, 2.5)])
    r = maximizer_path(c, (0, 0), (4, 4))
    assert r.maximizer.tolist() == [[1, 1], [2, 2], [3, 3]]
    cloud = sample_region(Rect(0, 40, 0, 40), 1.0, substream(2, 2))
    a = maximizer_path(cloud, (0, 0), (40, 40)).maximizer.tobytes()
    assert a == maximizer_path(cloud, (0, 0), (40, 40)).maximizer.tobytes()
    assert len(maximizer_path(PointCloud.from_points([]), (0, 0), (1, 1)).maximizer) == 0


def test_leftmost_and_rightmost_differ_when_tied():
    c = PointCloud.from_points([(1, 3), (3, 1)])
    left = maximizer_path(c, (0, 0), (4, 4), "leftmost").maximizer
    right = maximizer_path(c, (0, 0), (4, 4), "rightmost").maximizer
    assert left.tolist() == [[1, 3]] and right.tolist() == [[3, 1]]
    with pytest.raises(ValueError):
        maximizer_path(c, (0, 0), (4, 4), "middle")


def test_cylinder():
    assert cylinder_nu(0.5) == pytest.approx(2 / 3 - 1 / 12)
    cyl = CylinderSpec.vertical(64.0, 0.5)
    assert cyl.half_width == pytest.approx(64 ** cylinder_nu(0.5))
    # points on the axis x = 0 (u = v) during [T, T + T^tau]
    on_axis = LppResult(3, np.array([[64.0, 64.0], [66, 66], [70, 70]]))
    assert not crosses_cylinder(on_axis, cyl)
    thin = CylinderSpec(0, 64, 0, 72, 0.0)
    off = LppResult(1, np.array([[68.0, 66.0]]))
    assert crosses_cylinder(off, thin)
    assert not crosses_cylinder(LppResult(0), thin)
    with pytest.raises(ValueError):
        CylinderSpec(0, 0, 0, 1, 1.0, nu=1.0)
