"""Random-forest regression surrogate.

Trees are CART regressors grown by variance reduction. Split thresholds are
midpoints between consecutive distinct feature values. Among equally good
splits the lowest feature index wins, then the smallest threshold. Each tree
gets its own random substream spawned from ``ForestParams.seed``, so a forest
is a pure function of its data and parameters.

Prediction uncertainty is the spread of the per-tree predictions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 32
    max_depth: int = 16
    min_samples_leaf: int = 1
    feature_subsample: float = 5 / 6
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise InvalidInputError("n_trees, max_depth and min_samples_leaf must be >= 1")
        if not 0.0 < self.feature_subsample <= 1.0:
            raise InvalidInputError("feature_subsample must lie in (0, 1]")

    def features_per_split(self, d: int) -> int:
        return max(1, min(d, math.ceil(self.feature_subsample * d - 1e-12)))


class Tree:
    """A fitted regression tree stored as parallel node arrays.

    Node ``i`` is a leaf when ``feature[i] == -1``; otherwise rows with
    ``x[feature[i]] <= threshold[i]`` go to ``left[i]``.
    """

    def __init__(self, feature, threshold, left, right, value, n_features):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_features = n_features

    @classmethod
    def leaf(cls, value: float, n_features: int) -> "Tree":
        return cls([_LEAF], [0.0], [_LEAF], [_LEAF], [value], n_features)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.intp)
        for i in range(self.n_nodes):
            if self.feature[i] != _LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaves(self) -> np.ndarray:
        return self.value[self.feature == _LEAF]

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != _LEAF
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != _LEAF
        return self.value[node]


def _best_split(X, y, features, min_leaf):
    """Best (feature, threshold, gain) over ``features`` or None.

    Gain is the drop in the sum of squared deviations.
    """
    n = y.shape[0]
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)[:-1]
    csq = np.cumsum(ys * ys, axis=0)[:-1]
    tot, tot_sq = y.sum(), (y * y).sum()
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    sse_left = csq - csum * csum / n_left
    sse_right = (tot_sq - csq) - (tot - csum) ** 2 / n_right
    gain = (tot_sq - tot * tot / n) - sse_left - sse_right
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        pos = np.arange(1, n)
        valid &= ((pos >= min_leaf) & (n - pos >= min_leaf))[:, None]
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    if best <= 0.0:
        return None
    # first hit in feature-major order: lowest feature, then smallest threshold
    near = (gain >= best - 1e-12 * max(1.0, abs(best))).T
    f_idx, pos = np.unravel_index(np.argmax(near), near.shape)
    threshold = 0.5 * (xs[pos, f_idx] + xs[pos + 1, f_idx])
    return int(features[f_idx]), float(threshold), float(best)


def _leaf_value(y) -> float:
    # a plain mean of identical values can be off by an ulp
    return float(y[0]) if np.all(y == y[0]) else float(y.mean())


def _grow(X, y, params: ForestParams, rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    k = params.features_per_split(d)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(v):
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(v)
        return len(value) - 1

    root = new_node(_leaf_value(y))
    stack = [(root, np.arange(y.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if depth >= params.max_depth or idx.shape[0] < 2 * params.min_samples_leaf:
            continue
        if np.all(yi == yi[0]):
            continue
        feats = np.arange(d) if k == d else np.sort(rng.choice(d, size=k, replace=False))
        split = _best_split(X[idx], yi, feats, params.min_samples_leaf)
        if split is None:
            continue
        f, t, _ = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, t
        left[node] = new_node(_leaf_value(y[li]))
        right[node] = new_node(_leaf_value(y[ri]))
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(feature, threshold, left, right, value, d)


class RandomForest:
    def __init__(self, trees, n_features: int, params: ForestParams | None = None):
        self.trees = list(trees)
        if not self.trees:
            raise InvalidInputError("a forest needs at least one tree")
        if any(t.n_features != n_features for t in self.trees):
            raise InvalidInputError("all trees must share the forest's feature dimension")
        self.n_features = n_features
        self.params = params or ForestParams(n_trees=len(self.trees))

    def tree_predictions(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InvalidInputError(f"expected {self.n_features} features, got shape {X.shape}")
        return np.stack([t.predict(X) for t in self.trees])

    def predict_mean_std_batch(self, X):
        preds = self.tree_predictions(X)
        return preds.mean(axis=0), preds.std(axis=0)


def fit(X, y, params: ForestParams | None = None) -> RandomForest:
    """Fit a forest of variance-reduction regression trees.

    Parameters
    ----------
    X : (n, d) array
        Encoded configurations.
    y : (n,) array
        Targets (the tuner passes losses).
    params : ForestParams, optional
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("forest training data must be a non-empty 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise InvalidInputError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("forest training data must be finite")
    n = X.shape[0]
    trees = []
    for child in np.random.SeedSequence(params.seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        if params.bootstrap:
            idx = np.sort(rng.integers(0, n, size=n))
            trees.append(_grow(X[idx], y[idx], params, rng))
        else:
            trees.append(_grow(X, y, params, rng))
    return RandomForest(trees, X.shape[1], params)


def predict_mean_std(forest: RandomForest, x) -> tuple[float, float]:
    """Mean and population standard deviation of the per-tree predictions at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("predict_mean_std takes a single encoded vector")
    mean, std = forest.predict_mean_std_batch(x[None, :])
    return float(mean[0]), float(std[0])
