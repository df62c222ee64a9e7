"""Isolation Forest: random partition trees over a seeded subsample."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma

EULER_GAMMA = 0.5772156649015329


def harmonic(n: int) -> float:
    """H(n) = 1 + 1/2 + ... + 1/n, via the digamma identity H(n) = psi(n + 1) + gamma."""
    if n <= 0:
        return 0.0
    return float(digamma(n + 1.0)) + EULER_GAMMA


def average_path_length(n: int) -> float:
    """c(n): mean depth of an unsuccessful BST search over n keys.

    Normalizes isolation depths; also the depth credited to a leaf that still
    holds ``n`` unseparated points.
    """
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass
class IsolationTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: int

    def path_lengths(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        depth = np.zeros(len(X))
        rows = np.arange(len(X))
        active = self.left[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            depth[active] += 1
            active = self.left[node] >= 0
        return depth + _leaf_adjust(self.size[node])


def _leaf_adjust(sizes: np.ndarray) -> np.ndarray:
    uniq, inv = np.unique(sizes, return_inverse=True)
    return np.array([average_path_length(int(s)) for s in uniq])[inv]


def build_tree(X: np.ndarray, rng: np.random.Generator, max_depth: int) -> IsolationTree:
    feature, threshold, left, right, size = [], [], [], [], []
    reached = 0

    def grow(rows: np.ndarray, depth: int) -> int:
        nonlocal reached
        node = len(size)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(len(rows))
        reached = max(reached, depth)
        if depth >= max_depth or len(rows) <= 1:
            return node
        sub = X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            return node
        q = int(splittable[rng.integers(splittable.size)])
        p = rng.uniform(lo[q], hi[q])
        if p <= lo[q]:
            # uniform() may return the lower bound; keep both sides non-empty
            p = np.nextafter(lo[q], hi[q])
        mask = sub[:, q] < p
        feature[node] = q
        threshold[node] = p
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return IsolationTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(size, dtype=np.int64),
        reached,
    )


@dataclass
class IsolationForest:
    """Seeded Isolation Forest.

    Rows are put in a canonical (lexicographic) order before subsampling, so
    the fitted model does not depend on the order rows were supplied in.
    Per-tree generators are spawned from ``seed``; trees can be grown in
    parallel without affecting the result.
    """

    n_trees: int = 100
    subsample_size: int = 256
    contamination: float = 0.05
    seed: int = 0
    threads: int = 1
    trees: list[IsolationTree] = field(default_factory=list, repr=False)
    sample_size_: int = 0
    training_scores_: np.ndarray | None = field(default=None, repr=False)
    cutoff_: float = math.nan

    def __post_init__(self):
        if not 0 < self.contamination < 0.5:
            raise ValueError(f"contamination must lie in (0, 0.5), got {self.contamination}")
        if self.n_trees < 1 or self.subsample_size < 2:
            raise ValueError("need n_trees >= 1 and subsample_size >= 2")

    @property
    def max_depth(self) -> int:
        return math.ceil(math.log2(self.sample_size_))

    def fit(self, X, groups=None) -> "IsolationForest":
        """Grow the trees and set the contamination cutoff.

        With ``groups`` (one label per row), the training scores used for the
        cutoff are per-group mean scores, matching callers that score a unit
        as the mean over several rows.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) < 2:
            raise ValueError("need a 2-D array with at least 2 rows")
        canon = X[np.lexsort(X.T[::-1])]
        self.sample_size_ = min(self.subsample_size, len(X))
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)

        def grow(ss: np.random.SeedSequence) -> IsolationTree:
            rng = np.random.default_rng(ss)
            idx = rng.permutation(len(canon))[: self.sample_size_]
            return build_tree(canon[idx], rng, self.max_depth)

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                self.trees = list(pool.map(grow, seeds))
        else:
            self.trees = [grow(ss) for ss in seeds]
        scores = self.score_samples(X)
        if groups is not None:
            groups = np.asarray(groups)
            if len(groups) != len(X):
                raise ValueError("groups must have one label per row")
            _, inv = np.unique(groups, return_inverse=True)
            scores = np.bincount(inv, weights=scores) / np.bincount(inv)
        self.training_scores_ = scores
        k = max(1, int(round(self.contamination * len(scores))))
        self.cutoff_ = float(np.sort(self.training_scores_)[::-1][k - 1])
        return self

    def mean_path_length(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.mean([t.path_lengths(X) for t in self.trees], axis=0)

    def score_samples(self, X) -> np.ndarray:
        """Anomaly score 2^(-E[h(x)] / c(psi)), in (0, 1); higher is more isolated."""
        return np.power(2.0, -self.mean_path_length(X) / average_path_length(self.sample_size_))

    def is_anomalous(self, score: float) -> bool:
        # the contamination cutoff, but never for points no easier to isolate than average
        return score >= self.cutoff_ and score > 0.5
