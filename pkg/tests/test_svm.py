import numpy as np
import pytest

from mktune.datasets import gen_blobs
from mktune.errors import InvalidInputError
from mktune.kernels import KernelParams, gram_matrix, mixed_kernel
from mktune.svm import (
    BinarySVMModel,
    MulticlassSVMModel,
    TrainSettings,
    accuracy,
    class_averaged_accuracy,
    decision_function,
    decision_values,
    dual_objective,
    kkt_residuals,
    predict,
    predict_binary,
    predict_many,
    train_binary,
    train_ovo,
    vote_counts,
)

from oracles import (
    class_averaged_from_confusion,
    confusion_matrix,
    exact_dual_max,
    grid_dual_max,
)

GAUSS = dict(mixed_ratio=1.0, gaussian_ratio=1.0)


def full_alpha(model, n, y):
    alpha = np.zeros(n)
    alpha[model.support_indices] = model.dual_coefs * y[model.support_indices]
    return alpha


def bias_model(bias, classes=(-1, 1)):
    """A machine with no support vectors: the decision value is the bias."""
    return BinarySVMModel(np.zeros((0, 1)), np.zeros(0), bias, KernelParams(), classes)


# -- binary training ---------------------------------------------------------

def test_two_point_problem_against_dual_grid():
    X = np.array([[0.0], [1.0]])
    y = np.array([-1.0, 1.0])
    p = KernelParams(c=10.0, **GAUSS)
    m = train_binary(X, y, p)
    K = gram_matrix(X, X, p)
    grid_best, _ = grid_dual_max(K, y, 10.0, steps=200)
    exact_best, exact_alpha = exact_dual_max(K, y, 10.0)
    smo = dual_objective(full_alpha(m, 2, y), y, K)
    assert smo >= grid_best - 1e-12
    assert abs(smo - exact_best) <= 1e-9
    np.testing.assert_allclose(full_alpha(m, 2, y), exact_alpha, atol=1e-6)
    assert sorted(m.support_indices.tolist()) == [0, 1]
    assert abs(m.dual_coefs.sum()) <= 1e-6
    assert decision_function(m, np.array([0.0])) < 0 < decision_function(m, np.array([1.0]))


def test_xor_against_dual_grid():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    p = KernelParams(c=100.0, **GAUSS)
    m = train_binary(X, y, p)
    K = gram_matrix(X, X, p)
    grid_best, _ = grid_dual_max(K, y, 100.0, steps=100)
    exact_best, _ = exact_dual_max(K, y, 100.0)
    smo = dual_objective(full_alpha(m, 4, y), y, K)
    assert smo >= grid_best - 1e-9
    assert abs(smo - exact_best) <= 1e-4
    np.testing.assert_array_equal(predict_binary(m, X), y)


def test_duplicated_points_with_opposite_labels():
    X = np.array([[0.5, 0.5], [0.5, 0.5]])
    y = np.array([-1.0, 1.0])
    m = train_binary(X, y, KernelParams(c=1.0, **GAUSS))
    assert m.converged
    alpha = full_alpha(m, 2, y)
    assert np.all((alpha == 0.0) | (alpha == 1.0))
    pred = predict_binary(m, X)
    assert np.mean(pred == y) == 0.5


def test_dual_feasibility_and_model_invariants():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 2))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=60) > 0, 1.0, -1.0)
    for alpha in (0.0, 0.5, 1.0):
        p = KernelParams(mixed_ratio=alpha, sigmoid_ratio=0.5, gaussian_ratio=0.5, coef0=-0.5, c=2.0)
        m = train_binary(X, y, p)
        a = full_alpha(m, 60, y)
        assert np.all(a >= 0.0) and np.all(a <= 2.0)
        assert np.all(np.abs(m.dual_coefs) > 0) and np.all(np.abs(m.dual_coefs) <= 2.0)
        assert abs(m.dual_coefs.sum()) <= 1e-6
        np.testing.assert_array_equal(m.support_vectors, X[m.support_indices])


def test_kkt_conditions_after_convergence():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(50, 2))
    y = np.where(np.hypot(X[:, 0], X[:, 1]) > 1.1, 1.0, -1.0)
    p = KernelParams(c=5.0, **GAUSS)
    m = train_binary(X, y, p)
    assert m.converged
    margins = y * decision_values(m, X)
    res = kkt_residuals(full_alpha(m, 50, y), margins, 5.0)
    assert res.max() <= 1e-3


def test_kkt_residuals_cases():
    res = kkt_residuals(np.array([0.0, 0.0, 1.0, 1.0, 0.5]),
                        np.array([1.5, 0.5, 0.5, 1.5, 0.9]), 1.0)
    np.testing.assert_allclose(res, [0.0, 0.5, 0.0, 0.5, 0.1])


def test_margin_violations_non_increasing_in_c():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(-0.6, 1.0, size=(30, 2)), rng.normal(0.6, 1.0, size=(30, 2))])
    y = np.repeat([-1.0, 1.0], 30)
    counts = []
    for c in (0.1, 1.0, 10.0, 100.0):
        m = train_binary(X, y, KernelParams(c=c, mixed_ratio=1.0, gaussian_ratio=0.5))
        counts.append(int(np.sum(y * decision_values(m, X) < 1.0)))
    assert counts == sorted(counts, reverse=True), counts


def test_training_is_deterministic():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(40, 3))
    y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
    p = KernelParams(mixed_ratio=0.3, sigmoid_ratio=0.2, gaussian_ratio=0.8, coef0=0.1, c=3.0)
    a, b = train_binary(X, y, p), train_binary(X, y, p)
    np.testing.assert_array_equal(a.dual_coefs, b.dual_coefs)
    np.testing.assert_array_equal(a.support_indices, b.support_indices)
    assert a.bias == b.bias


def test_binary_input_errors():
    X = np.zeros((3, 1))
    with pytest.raises(InvalidInputError):
        train_binary(X, [1, 1, 1], KernelParams())
    with pytest.raises(InvalidInputError):
        train_binary(X, [1, -1, 2], KernelParams())
    with pytest.raises(InvalidInputError):
        train_binary(X, [1, -1], KernelParams())


def test_iteration_cap_flags_non_convergence():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 2))
    y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
    m = train_binary(X, y, KernelParams(c=100.0, **GAUSS), TrainSettings(max_iterations=1))
    assert not m.converged


# -- decision function -------------------------------------------------------

def test_decision_function_without_support_vectors_is_bias():
    assert decision_function(bias_model(-0.25), np.array([3.0])) == -0.25


def test_decision_batch_equals_scalar_loop():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 1] > 0, 1.0, -1.0)
    p = KernelParams(mixed_ratio=0.6, sigmoid_ratio=0.4, gaussian_ratio=0.9, coef0=0.3, c=1.0)
    m = train_binary(X, y, p)
    T = rng.normal(size=(10, 2))
    batch = decision_values(m, T)
    for t, f in zip(T, batch):
        loop = sum(c * mixed_kernel(sv, t, p) for c, sv in zip(m.dual_coefs, m.support_vectors)) + m.bias
        assert abs(f - loop) <= 1e-12


def test_decision_dimension_mismatch():
    m = train_binary(np.array([[0.0, 0.0], [1.0, 1.0]]), [-1, 1], KernelParams(**GAUSS))
    with pytest.raises(InvalidInputError):
        decision_function(m, np.array([1.0]))


# -- one-vs-one --------------------------------------------------------------

def test_ovo_two_classes_matches_binary():
    d = gen_blobs(2, 20, 2, separation=3.0, noise=1.0, seed=1)
    p = KernelParams(c=1.0, **GAUSS)
    m = train_ovo(d.features, d.labels, p)
    assert len(m.pairwise_models) == 1
    a, b, binary = m.pairwise_models[0]
    assert (a, b) == (0, 1)
    np.testing.assert_array_equal(predict_many(m, d.features).astype(int), predict_binary(binary, d.features))


def test_ovo_six_classes_has_fifteen_models():
    d = gen_blobs(6, 5, 2, separation=4.0, noise=0.5, seed=0)
    m = train_ovo(d.features, d.labels, KernelParams(**GAUSS))
    assert len(m.pairwise_models) == 15
    assert {(a, b) for a, b, _ in m.pairwise_models} == {(a, b) for a in range(6) for b in range(a + 1, 6)}


def test_ovo_separated_clouds():
    d = gen_blobs(3, 30, 2, separation=10.0, noise=1.0, seed=3)
    m = train_ovo(d.features, d.labels, KernelParams(c=10.0, **GAUSS))
    assert accuracy(m, d.features, d.labels) >= 0.95


def test_ovo_parallel_equals_serial():
    d = gen_blobs(4, 10, 2, separation=3.0, noise=1.0, seed=2)
    p = KernelParams(c=2.0, **GAUSS)
    serial, parallel = train_ovo(d.features, d.labels, p), train_ovo(d.features, d.labels, p, n_jobs=3)
    for (_, _, s), (_, _, q) in zip(serial.pairwise_models, parallel.pairwise_models):
        np.testing.assert_array_equal(s.dual_coefs, q.dual_coefs)


def test_ovo_needs_two_classes():
    with pytest.raises(InvalidInputError):
        train_ovo(np.zeros((3, 1)), [2, 2, 2], KernelParams())


def test_vote_tie_goes_to_first_class():
    # (0,1) votes 0, (0,2) votes 2, (1,2) votes 1
    m = MulticlassSVMModel((0, 1, 2), [
        (0, 1, bias_model(-1.0, (0, 1))),
        (0, 2, bias_model(1.0, (0, 2))),
        (1, 2, bias_model(-1.0, (1, 2))),
    ])
    np.testing.assert_array_equal(vote_counts(m, np.zeros((1, 1))), [[1, 1, 1]])
    assert predict(m, np.zeros(1)) == 0


def test_unanimous_vote():
    m = MulticlassSVMModel(("a", "b", "c"), [
        ("a", "b", bias_model(1.0, ("a", "b"))),
        ("a", "c", bias_model(1.0, ("a", "c"))),
        ("b", "c", bias_model(1.0, ("b", "c"))),
    ])
    assert predict(m, np.zeros(1)) == "c"


# -- accuracy metrics --------------------------------------------------------

def _bump_model():
    # f(x) = exp(-x^2) - 0.5 > 0 exactly when |x| < sqrt(ln 2) ~ 0.8326
    binary = BinarySVMModel(np.array([[0.0]]), np.array([1.0]), -0.5,
                            KernelParams(mixed_ratio=1.0, gaussian_ratio=1.0), ("a", "b"))
    return MulticlassSVMModel(("a", "b"), [("a", "b", binary)])


def test_accuracy_hand_counted():
    x = np.array([0.0, 0.5, -0.5, 0.8, 1.0, 1.5, -1.5, 2.0, 0.2, -2.0])[:, None]
    labels = np.array(["b", "b", "a", "b", "a", "b", "a", "b", "a", "a"])
    # correct: rows 0, 1, 3, 4, 6, 9
    assert accuracy(_bump_model(), x, labels) == 0.6


def test_accuracy_complement_and_perfect():
    m = _bump_model()
    x = np.array([0.0, 0.5, 1.0, 2.0])[:, None]
    truth = predict_many(m, x)
    assert accuracy(m, x, truth) == 1.0
    flipped = np.where(truth == "a", "b", "a")
    assert accuracy(m, x, flipped) == 0.0
    mixed = np.array(["b", "a", "a", "b"])
    assert accuracy(m, x, mixed) == 1.0 - accuracy(m, x, np.where(mixed == "a", "b", "a"))


def test_accuracy_rejects_empty():
    with pytest.raises(InvalidInputError):
        accuracy(_bump_model(), np.zeros((0, 1)), [])


def test_class_averaged_two_classes():
    m = _bump_model()
    # class a: both right; class b: one of two right
    x = np.array([1.5, -2.0, 0.1, 1.2])[:, None]
    labels = np.array(["a", "a", "b", "b"])
    assert class_averaged_accuracy(m, x, labels) == 0.75


def test_class_averaged_balanced_equals_accuracy():
    d = gen_blobs(3, 20, 2, separation=2.0, noise=1.0, seed=6)
    m = train_ovo(d.features, d.labels, KernelParams(c=1.0, **GAUSS))
    assert class_averaged_accuracy(m, d.features, d.labels) == pytest.approx(accuracy(m, d.features, d.labels), abs=1e-12)


def test_class_averaged_matches_confusion_oracle():
    d = gen_blobs(6, 12, 2, separation=1.5, noise=1.0, seed=8)
    m = train_ovo(d.features, d.labels, KernelParams(c=1.0, **GAUSS))
    keep = np.concatenate([np.flatnonzero(d.labels == c)[: 3 + c] for c in range(6)])
    X, labels = d.features[keep], d.labels[keep]
    M = confusion_matrix(labels, predict_many(m, X), list(range(6)))
    assert abs(class_averaged_accuracy(m, X, labels) - class_averaged_from_confusion(M)) <= 1e-12


def test_class_averaged_requires_every_class():
    d = gen_blobs(3, 5, 2, seed=1)
    m = train_ovo(d.features, d.labels, KernelParams(**GAUSS))
    with pytest.raises(InvalidInputError):
        class_averaged_accuracy(m, d.features[d.labels < 2], d.labels[d.labels < 2])
