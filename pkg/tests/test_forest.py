import numpy as np
import pytest

from mktune.errors import InvalidInputError
from mktune.forest import ForestParams, RandomForest, Tree, fit, predict_mean_std

EXACT = ForestParams(n_trees=1, max_depth=64, bootstrap=False, feature_subsample=1.0)


def test_constant_targets():
    X = np.random.default_rng(0).random((20, 3))
    f = fit(X, np.full(20, 0.7), ForestParams(n_trees=8))
    for t in f.trees:
        np.testing.assert_array_equal(t.leaves(), 0.7)
    assert predict_mean_std(f, X[0]) == (0.7, 0.0)


def test_two_points_exact_fit():
    X = np.array([[0.2], [0.8]])
    f = fit(X, np.array([1.0, 3.0]), EXACT)
    np.testing.assert_array_equal(f.tree_predictions(X)[0], [1.0, 3.0])
    assert f.trees[0].threshold[0] == 0.5


def test_same_seed_same_forest():
    rng = np.random.default_rng(1)
    X, y = rng.random((40, 5)), rng.random(40)
    a, b = fit(X, y, ForestParams(seed=3)), fit(X, y, ForestParams(seed=3))
    T = rng.random((30, 5))
    np.testing.assert_array_equal(a.tree_predictions(T), b.tree_predictions(T))


def test_single_tree_std_zero():
    rng = np.random.default_rng(2)
    X, y = rng.random((10, 2)), rng.random(10)
    f = fit(X, y, ForestParams(n_trees=1))
    assert predict_mean_std(f, X[3])[1] == 0.0


def test_hand_built_forest_mean_std():
    trees = [Tree.leaf(v, 2) for v in (0.1, 0.2, 0.3, 0.4, 0.5)]
    mean, std = predict_mean_std(RandomForest(trees, 2), np.zeros(2))
    assert mean == pytest.approx(0.3, abs=1e-15)
    assert std == pytest.approx(np.sqrt(0.02), abs=1e-12)
    assert std == pytest.approx(0.1414213562, abs=1e-10)


def test_split_tie_breaks_on_lowest_feature():
    # both features separate the targets perfectly
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    f = fit(X, np.array([0.0, 1.0]), EXACT)
    assert f.trees[0].feature[0] == 0


def test_split_tie_breaks_on_smallest_threshold():
    # splitting at 0.5 or 1.5 gives the same reduction
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 2.0])
    f = fit(X, y, ForestParams(n_trees=1, max_depth=1, bootstrap=False, feature_subsample=1.0))
    assert f.trees[0].threshold[0] == 0.5


def test_exact_fit_on_distinct_inputs():
    rng = np.random.default_rng(3)
    X, y = rng.random((60, 4)), rng.normal(size=60)
    f = fit(X, y, ForestParams(n_trees=3, max_depth=1000, bootstrap=False, feature_subsample=1.0))
    np.testing.assert_allclose(f.tree_predictions(X), np.tile(y, (3, 1)), atol=1e-12)


def test_mean_within_target_range_and_std_nonnegative():
    rng = np.random.default_rng(4)
    X, y = rng.random((50, 3)), rng.random(50) * 2 - 1
    f = fit(X, y, ForestParams(seed=1))
    mean, std = f.predict_mean_std_batch(rng.random((200, 3)) * 3 - 1)
    assert mean.min() >= y.min() and mean.max() <= y.max()
    assert std.min() >= 0.0


def test_deeper_trees_fit_better():
    rng = np.random.default_rng(5)
    X = rng.random((80, 2))
    y = np.sin(6 * X[:, 0]) + X[:, 1] ** 2
    mse = []
    for depth in (2, 8):
        f = fit(X, y, ForestParams(max_depth=depth, seed=2))
        mse.append(np.mean((f.predict_mean_std_batch(X)[0] - y) ** 2))
    assert mse[1] <= mse[0]


def test_depth_and_leaf_limits():
    rng = np.random.default_rng(6)
    X, y = rng.random((64, 2)), rng.random(64)
    f = fit(X, y, ForestParams(n_trees=4, max_depth=3, min_samples_leaf=5, seed=0))
    for t in f.trees:
        assert t.depth <= 3


def test_features_per_split():
    assert ForestParams().features_per_split(5) == 5
    assert ForestParams().features_per_split(6) == 5
    assert ForestParams(feature_subsample=0.1).features_per_split(3) == 1


def test_errors():
    with pytest.raises(InvalidInputError):
        fit(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(InvalidInputError):
        fit(np.zeros((3, 2)), np.zeros(2))
    f = fit(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(InvalidInputError):
        predict_mean_std(f, np.zeros(3))
    with pytest.raises(InvalidInputError):
        ForestParams(feature_subsample=0.0)
