import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_center_sets, grid_costs, three_blobs
from robust_stream import rng as crng
from robust_stream.coreset import (
    ClusteringConfig,
    CoresetTree,
    WeightedPoints,
    kz_cost,
    lloyd_refine,
    offline_coreset,
    passthrough,
    sensitivity_bounds,
)
from robust_stream.errors import InputError


def gen(seed=0):
    return crng.generator(seed, 1)


# kz_cost

def test_kz_cost_zero():
    assert kz_cost(WeightedPoints.unit([[0.0, 0.0]]), [[0.0, 0.0]], 2) == 0.0


@pytest.mark.parametrize("z, expected", [(1, 10.0), (2, 50.0)])
def test_kz_cost_weighted(z, expected):
    pts = WeightedPoints([[3.0, 4.0]], [2.0])
    assert kz_cost(pts, [[0.0, 0.0]], z) == pytest.approx(expected)


def test_kz_cost_needs_centers():
    with pytest.raises(InputError):
        kz_cost(WeightedPoints.unit([[1.0]]), np.zeros((0, 1)), 2)


# config

def test_config_levels_and_budget():
    cfg = ClusteringConfig(k=2, leaf_size=64, n_bound=1024, eps=0.4)
    assert cfg.max_levels == 4
    assert cfg.eps_level == pytest.approx(0.05)
    assert cfg.pseudo_dim(2) == pytest.approx(2 * 2 * 3 * math.log(3))


@pytest.mark.parametrize("bad", [dict(k=0), dict(z=3), dict(eps=1.0), dict(delta=0.0), dict(leaf_size=0)])
def test_config_validation(bad):
    with pytest.raises(InputError):
        ClusteringConfig(**(dict(k=2) | bad))


# sensitivity_bounds

def test_sensitivity_identical_points_uniform():
    pts = WeightedPoints.unit(np.ones((40, 2)))
    cfg = ClusteringConfig(k=2)
    s = sensitivity_bounds(pts, cfg, gen())
    np.testing.assert_allclose(s, cfg.c1 / 40)


def test_sensitivity_two_far_clusters():
    rng_ = np.random.default_rng(0)
    X = np.vstack([rng_.normal(0, 0.01, (50, 2)), rng_.normal(100, 0.01, (50, 2))])
    cfg = ClusteringConfig(k=2)
    s = sensitivity_bounds(WeightedPoints.unit(X), cfg, gen(3))
    # each cluster holds at least one of the 2k bicriteria centers, so its
    # mass terms alone sum to c1; the bound is also identical across reruns
    for block in (s[:50], s[50:]):
        assert block.sum() >= cfg.c1
    assert np.all(s >= cfg.c1 / 100)
    np.testing.assert_array_equal(s, sensitivity_bounds(WeightedPoints.unit(X), cfg, gen(3)))


def test_sensitivity_outlier_is_maximal():
    X = np.zeros((100, 2))
    X[-1] = [1e6, 1e6]
    cfg = ClusteringConfig(k=1)
    s = sensitivity_bounds(WeightedPoints.unit(X), cfg, gen(1))
    assert np.argmax(s) == 99
    assert s[99] >= cfg.c1 * (1 - 1e-9)
    assert s[99] > 50 * s[0]


# offline_coreset

def test_offline_identical_points_exact():
    pts = WeightedPoints(np.tile([[1.0, 2.0]], (30, 1)), np.full(30, 2.0))
    cs = offline_coreset(pts, ClusteringConfig(k=2), 0.1, gen(), max_size=10)
    assert len(cs) == 10
    assert cs.total_weight == pytest.approx(60.0)
    for c in ([[0.0, 0.0]], [[5.0, -1.0], [1.0, 2.0]]):
        assert kz_cost(cs, c, 2) == pytest.approx(kz_cost(pts, c, 2))


def test_offline_probability_and_weight_arithmetic():
    # with uniform sensitivities S = c1 (n * c1/n), q = 1/n, weight = n/m
    X = np.ones((100, 2))
    cfg = ClusteringConfig(k=1)
    pts = WeightedPoints.unit(X)
    s = sensitivity_bounds(pts, cfg, gen())
    S = float(s.sum())
    assert S == pytest.approx(cfg.c1)
    np.testing.assert_allclose(s / S, 0.01)
    cs = offline_coreset(pts, cfg, 0.2, gen(), max_size=25)
    np.testing.assert_allclose(cs.weights, 100 / 25)


def test_offline_sample_size_formula():
    cfg = ClusteringConfig(k=1, z=2, c0=10, d_prime=3.0, delta=0.1)
    assert cfg.sample_size(2.0, 0.5, 2) == math.ceil(10 * 4 / 0.25 * (3 + math.log(10)))


def test_offline_returns_input_when_sample_exceeds_size():
    X = np.random.default_rng(0).uniform(size=(200, 2))
    pts = WeightedPoints.unit(X)
    cs = offline_coreset(pts, ClusteringConfig(k=1), 0.2, gen())
    np.testing.assert_array_equal(cs.coords, X)


@pytest.mark.parametrize("size", [None, 100])
def test_offline_uniform_square_grid_costs(size):
    X = np.random.default_rng(5).uniform(size=(200, 2))
    pts = WeightedPoints.unit(X)
    cs = offline_coreset(pts, ClusteringConfig(k=1, z=2), 0.2, gen(2), max_size=size)
    grid = np.array(list(itertools.product(np.linspace(0, 1, 11), repeat=2)))
    for c in grid:
        assert kz_cost(cs, [c], 2) == pytest.approx(kz_cost(pts, [c], 2), rel=0.2)


def test_offline_total_weight_unbiased():
    X = three_blobs(500, 1)
    pts = WeightedPoints.unit(X)
    cfg = ClusteringConfig(k=3)
    totals = [offline_coreset(pts, cfg, 0.1, crng.generator(s, 9), max_size=40).total_weight for s in range(200)]
    assert np.mean(totals) == pytest.approx(500, rel=0.05)


# tree structure

def test_tree_lossless_four_points_single_leaf():
    tree = CoresetTree(ClusteringConfig(k=1, leaf_size=1, n_bound=4), reducer=passthrough)
    for i in range(4):
        tree.insert([float(i)])
    assert tree.occupied_levels() == [3]
    assert len(tree.levels[3]) == 4


def test_tree_partial_leaf():
    tree = CoresetTree(ClusteringConfig(k=1, leaf_size=2, n_bound=8))
    for i in range(3):
        tree.insert([float(i), 0.0])
    assert tree.occupied_levels() == [1]
    assert len(tree.pending) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(1, 9))
def test_tree_binary_counter_law(n, leaf):
    tree = CoresetTree(ClusteringConfig(k=1, leaf_size=leaf, n_bound=256), reducer=passthrough)
    for i in range(n):
        tree.insert([float(i)])
    q = n // leaf
    bits = [i + 1 for i in range(q.bit_length()) if q >> i & 1]
    assert tree.occupied_levels() == bits
    assert len(tree.pending) == n % leaf


def test_tree_peak_storage():
    cfg = ClusteringConfig(k=2, leaf_size=64, n_bound=1024, seed=3)
    assert cfg.max_levels == 4
    tree = CoresetTree(cfg)
    for x in np.random.default_rng(0).standard_normal((1024, 2)):
        tree.insert(x)
    assert tree.peak_stored <= 64 * (cfg.max_levels + 1)
    assert all(len(b) <= cfg.leaf_size for b in tree.levels.values())


def test_tree_rejects_bad_points():
    tree = CoresetTree(ClusteringConfig(k=1))
    tree.insert([0.0, 1.0])
    with pytest.raises(InputError):
        tree.insert([0.0, 1.0, 2.0])
    with pytest.raises(InputError):
        tree.insert([0.0, np.inf])
    with pytest.raises(InputError):
        tree.insert([0.0, 1.0], weight=0.0)


# query

def test_query_empty_and_single():
    tree = CoresetTree(ClusteringConfig(k=1))
    assert len(tree.query()) == 0
    tree.insert([1.0, 2.0], weight=3.0)
    q = tree.query()
    np.testing.assert_array_equal(q.coords, [[1.0, 2.0]])
    assert q.weights[0] == 3.0


def test_query_lossless_equals_prefix_and_does_not_mutate():
    X = np.random.default_rng(2).standard_normal((77, 2))
    tree = CoresetTree(ClusteringConfig(k=2, leaf_size=4, n_bound=128), reducer=passthrough)
    for i, x in enumerate(X):
        tree.insert(x)
        q = tree.query()
        assert sorted(map(tuple, q.coords)) == sorted(map(tuple, X[: i + 1]))
    before = tree.stored_points
    tree.query()
    assert tree.stored_points == before
    for C in (X[:2], X[10:12], np.zeros((2, 2))):
        assert kz_cost(tree.query(), C, 2) == pytest.approx(kz_cost(WeightedPoints.unit(X), C, 2), rel=1e-12)


def _grid_ok(q, X, k, z, eps):
    grid, subsets = grid_center_sets(X, k)
    full = grid_costs(X, np.ones(len(X)), grid, subsets, z)
    approx = grid_costs(q.coords, q.weights, grid, subsets, z)
    return bool(np.all(np.abs(approx / full - 1) <= eps))


def test_query_three_gaussians_512():
    good = 0
    for seed in range(10):
        X = three_blobs(512, seed)
        tree = CoresetTree(ClusteringConfig(k=3, z=2, eps=0.3, leaf_size=256, n_bound=512, seed=seed))
        for x in X:
            tree.insert(x)
        assert len(tree.query()) < 512
        good += _grid_ok(tree.query(), X, 3, 2, 0.3)
    assert good >= 9


def test_adaptive_farthest_point_adversary_keeps_guarantee():
    # the adversary inserts a point near the input point worst covered by the current coreset
    good = 0
    for seed in range(10):
        rng_ = np.random.default_rng(seed)
        tree = CoresetTree(ClusteringConfig(k=3, z=2, eps=0.3, leaf_size=256, n_bound=1024, seed=seed))
        X = []
        for t in range(768):
            if t < 64 or t % 4:
                x = three_blobs(1, seed * 10_000 + t)[0]
            else:
                q = tree.query()
                far = np.argmax(np.min(np.linalg.norm(np.array(X)[:, None] - q.coords[None], axis=2), axis=1))
                x = X[far] + 0.5 * rng_.standard_normal(2)
            tree.insert(x)
            X.append(x)
        good += _grid_ok(tree.query(), np.array(X), 3, 2, 0.3)
    assert good >= 9


# lloyd_refine

def test_lloyd_k1_centroid():
    rng_ = np.random.default_rng(0)
    pts = WeightedPoints(rng_.standard_normal((30, 3)), rng_.uniform(0.5, 2, 30))
    c = lloyd_refine(pts, 1, 2, seed=1)
    np.testing.assert_allclose(c[0], pts.weights @ pts.coords / pts.weights.sum(), atol=1e-12)


def test_lloyd_two_far_clusters():
    rng_ = np.random.default_rng(1)
    A, B = rng_.normal(0, 1, (50, 2)), rng_.normal(50, 1, (50, 2))
    c = lloyd_refine(WeightedPoints.unit(np.vstack([A, B])), 2, 2, seed=4)
    for blob in (A, B):
        lo, hi = blob.min(0), blob.max(0)
        assert any(np.all((ci >= lo) & (ci <= hi)) for ci in c)


def test_lloyd_k1_median_beats_every_input_point():
    x = np.array([0.0, 1.0, 2.0, 10.0, 11.0])
    pts = WeightedPoints(np.column_stack([x, 2 * x]), np.array([1.0, 3.0, 1.0, 2.0, 1.0]))
    c = lloyd_refine(pts, 1, 1, seed=0)
    cost = kz_cost(pts, c, 1)
    for p in pts.coords:
        assert cost <= kz_cost(pts, [p], 1) + 1e-9


def test_lloyd_duplicate_warning():
    with pytest.warns(RuntimeWarning):
        lloyd_refine(WeightedPoints.unit(np.ones((5, 2))), 2, 2)
