import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scade.iforest import IsolationForest, average_path_length, build_tree, harmonic


def harmonic_fsum(n):
    return math.fsum(1.0 / i for i in range(1, n + 1))


@lru_cache(maxsize=None)
def enumerated_depth(n):
    """Mean leaf depth over every isolation tree on n distinct evenly spaced points.

    A uniform split over an evenly spaced range cuts each gap with equal
    probability, so the left child holds i points, i = 1..n-1, each with
    probability 1/(n-1); a point lands on the size-i side with probability i/n.
    """
    if n <= 1:
        return Fraction(0)
    total = sum(Fraction(i, n) * enumerated_depth(i) + Fraction(n - i, n) * enumerated_depth(n - i) for i in range(1, n))
    return 1 + total / (n - 1)


def test_c_small_values():
    assert average_path_length(1) == 0
    assert average_path_length(2) == 1
    assert average_path_length(3) == pytest.approx(5 / 3, rel=1e-15)
    assert average_path_length(256) == pytest.approx(2 * harmonic_fsum(255) - 2 * 255 / 256, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 10, 1000, 123_457, 10**6])
def test_harmonic_matches_direct_sum(n):
    assert harmonic(n) == pytest.approx(harmonic_fsum(n), rel=1e-12, abs=1e-12)


def test_c_matches_harmonic_formula_grid():
    for n in np.unique(np.geomspace(3, 10**6, 200).astype(int)):
        n = int(n)
        expected = 2 * harmonic_fsum(n - 1) - 2 * (n - 1) / n
        assert average_path_length(n) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("n", range(2, 7))
def test_c_matches_exhaustive_and_monte_carlo(n):
    assert float(enumerated_depth(n)) == pytest.approx(average_path_length(n), rel=1e-12)
    rng = np.random.default_rng(11)
    X = np.arange(n, dtype=float).reshape(-1, 1)
    depths = [build_tree(X, rng, 64).path_lengths(X).mean() for _ in range(4000)]
    assert np.mean(depths) == pytest.approx(average_path_length(n), rel=0.05)


def test_tree_depth_limit_and_score_range():
    X = np.random.default_rng(0).normal(size=(500, 3))
    f = IsolationForest(n_trees=20, subsample_size=64, seed=1).fit(X)
    assert all(t.depth <= math.ceil(math.log2(64)) for t in f.trees)
    s = f.score_samples(X)
    assert ((s > 0) & (s < 1)).all()


def test_identical_rows_score_half():
    X = np.ones((40, 4))
    s = IsolationForest(n_trees=50, subsample_size=32, seed=0).fit(X).score_samples(X)
    # no split is possible, so every point sits in a root leaf credited c(psi)
    np.testing.assert_allclose(s, 0.5)


def test_planted_outlier_has_max_score():
    rng = np.random.default_rng(5)
    X = rng.normal(10, 1, size=(51, 4))
    X[-1] *= 100
    s = IsolationForest(n_trees=100, seed=3).fit(X).score_samples(X)
    assert int(np.argmax(s)) == 50


def test_depth_limited_hand_computation():
    # points 0, 1, 100 with psi = 3 (depth limit 2). The root cut is uniform
    # on [0, 100): with probability 1/100 it isolates 0 first (0 at depth 1,
    # then 1 and 100 at depth 2), otherwise it isolates 100 first (100 at
    # depth 1, then 0 and 1 at depth 2).
    X = np.array([[0.0], [1.0], [100.0]])
    f = IsolationForest(n_trees=4000, subsample_size=3, seed=0).fit(X)
    expected_h = np.array([0.01 * 1 + 0.99 * 2, 2.0, 0.01 * 2 + 0.99 * 1])
    np.testing.assert_allclose(f.mean_path_length(X), expected_h, atol=0.01)
    expected_s = 2 ** (-expected_h / (5 / 3))
    np.testing.assert_allclose(f.score_samples(X), expected_s, atol=0.01)
    assert f.is_anomalous(f.score_samples(X)[2])


def test_contamination_quantile():
    X = np.random.default_rng(1).normal(size=(100, 2))
    f = IsolationForest(contamination=0.1, seed=2).fit(X)
    assert int((f.training_scores_ >= f.cutoff_).sum()) == 10


def test_grouped_cutoff_uses_group_means():
    X = np.random.default_rng(4).normal(size=(100, 2))
    groups = np.repeat(np.arange(20), 5)
    f = IsolationForest(contamination=0.1, seed=2).fit(X, groups)
    means = f.score_samples(X).reshape(20, 5).mean(axis=1)
    np.testing.assert_allclose(f.training_scores_, means)
    assert int((means >= f.cutoff_).sum()) == 2
    with pytest.raises(ValueError):
        f.fit(X, groups[:-1])


def test_is_anomalous_needs_score_above_half():
    f = IsolationForest(contamination=0.4, seed=0).fit(np.ones((10, 2)))
    assert f.cutoff_ == pytest.approx(0.5)
    assert not f.is_anomalous(0.5)


def test_determinism_and_threads():
    X = np.random.default_rng(2).normal(size=(300, 4))
    a = IsolationForest(seed=9).fit(X).score_samples(X)
    b = IsolationForest(seed=9, threads=4).fit(X).score_samples(X)
    np.testing.assert_array_equal(a, b)
    c = IsolationForest(seed=10).fit(X).score_samples(X)
    assert not np.array_equal(a, c)


def test_bad_parameters():
    with pytest.raises(ValueError):
        IsolationForest(contamination=0.5)
    with pytest.raises(ValueError):
        IsolationForest(n_trees=0)
    with pytest.raises(ValueError):
        IsolationForest().fit(np.ones((1, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 60))
def test_row_order_invariance(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 20, size=(n, 3)).astype(float)
    perm = rng.permutation(n)
    a = IsolationForest(n_trees=10, seed=seed).fit(X)
    b = IsolationForest(n_trees=10, seed=seed).fit(X[perm])
    np.testing.assert_array_equal(a.score_samples(X), b.score_samples(X))
    assert a.cutoff_ == b.cutoff_


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scaling_a_dominant_row_never_lowers_its_score(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(40, 3))
    X[0] = X.max(axis=0) + rng.uniform(0.1, 5, size=3)
    before = IsolationForest(n_trees=200, seed=seed).fit(X).score_samples(X[:1])[0]
    Y = X.copy()
    Y[0] *= 10
    after = IsolationForest(n_trees=200, seed=seed).fit(Y).score_samples(Y[:1])[0]
    assert after >= before - 1e-12
