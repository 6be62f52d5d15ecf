import numpy as np
import pytest

from goarbench.datasets import Dataset, make_gmm, symmetric_gmm_spec
from goarbench.models import (LinearModel, MLPClassifier, ModelParams,
                              TrainConfig, accuracy, fit_logistic, fit_mlp,
                              forward, forward_batch, init_mlp, input_gradient,
                              input_gradients, logistic_objective, train)


def naive_forward(model, x):
    """Independent straightforward re-implementation used as an oracle."""
    a = np.array(x, dtype=float)
    for i in range(len(model.weights)):
        z = np.zeros(model.weights[i].shape[0])
        for r in range(model.weights[i].shape[0]):
            acc = model.biases[i][r]
            for c in range(model.weights[i].shape[1]):
                acc += model.weights[i][r, c] * a[c]
            z[r] = acc
        a = np.maximum(z, 0.0) if i < len(model.weights) - 1 else z
    return a


def fd_gradient(model, x, class_index, h=1e-4):
    g = np.zeros_like(x)
    for j in range(x.shape[0]):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (forward(model, xp)[class_index]
                - forward(model, xm)[class_index]) / (2 * h)
    return g


def test_init_shapes():
    m = init_mlp([64, 128, 128, 128, 2], seed=0)
    assert [W.shape for W in m.weights] == [(128, 64), (128, 128),
                                            (128, 128), (2, 128)]
    assert [b.shape for b in m.biases] == [(128,), (128,), (128,), (2,)]


def test_init_deterministic():
    a = init_mlp([4, 8, 2], seed=7)
    b = init_mlp([4, 8, 2], seed=7)
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
    for ba, bb in zip(a.biases, b.biases):
        assert np.array_equal(ba, bb)


def test_init_degenerate_sizes():
    with pytest.raises(ValueError):
        init_mlp([64], seed=0)
    with pytest.raises(ValueError):
        init_mlp([4, 0, 2], seed=0)


def test_forward_zero_model():
    m = ModelParams([np.zeros((3, 4)), np.zeros((2, 3))],
                    [np.zeros(3), np.zeros(2)])
    assert np.array_equal(forward(m, np.ones(4)), np.zeros(2))


def test_forward_identity_single_layer():
    m = ModelParams([np.eye(5)], [np.zeros(5)])
    x = np.arange(5.0) - 2.0
    assert np.array_equal(forward(m, x), x)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(0)
    m = init_mlp([6, 9, 5, 3], seed=1)
    for _ in range(5):
        x = rng.standard_normal(6)
        got = forward(m, x)
        want = naive_forward(m, x)
        assert np.all(np.abs(got - want) <= 1e-12 * np.maximum(np.abs(want), 1))


def test_forward_dim_mismatch():
    m = init_mlp([4, 3, 2], seed=0)
    with pytest.raises(ValueError):
        forward(m, np.zeros(5))


def test_input_gradient_linear_model_is_weight_row():
    W = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
    m = ModelParams([W], [np.zeros(2)])
    x = np.array([0.3, -0.7, 2.0])
    for k in range(2):
        assert np.array_equal(input_gradient(m, x, k), W[k])


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    m = init_mlp([8, 16, 16, 3], seed=3)
    for _ in range(10):
        x = rng.standard_normal(8)
        k = int(rng.integers(0, 3))
        g = input_gradient(m, x, k)
        fd = fd_gradient(m, x, k)
        big = np.abs(g) > 1e-6
        assert np.all(np.abs(g[big] - fd[big]) / np.abs(g[big]) < 1e-4)


def test_input_gradient_zero_first_layer():
    m = init_mlp([4, 6, 2], seed=0)
    m.weights[0][:] = 0.0
    assert np.array_equal(input_gradient(m, np.ones(4), 0), np.zeros(4))


def test_input_gradient_class_out_of_range():
    m = init_mlp([4, 3, 2], seed=0)
    with pytest.raises(ValueError):
        input_gradient(m, np.zeros(4), 5)


def bayes_accuracy(ds, means, cov_scale):
    """Closed-form Bayes classifier for an isotropic equal-weight mixture."""
    d2 = ((ds.X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == ds.y))


def test_train_separable_gmm_reaches_bayes_level():
    spec = symmetric_gmm_spec(dim=16, cov_scale=0.3, samples_per_class=150)
    ds = make_gmm(spec, seed=0)
    holdout = make_gmm(spec, seed=99)
    assert bayes_accuracy(holdout, spec.means, 0.3) >= 0.999
    cfg = TrainConfig(seed=0, batch_size=64, max_epochs=60)
    model = fit_mlp(ds, cfg, hidden=(32, 32))
    assert accuracy(model, holdout) >= 0.99


def test_train_no_signal_dataset_is_chance():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 8))
    X = np.concatenate([X, X])
    y = np.concatenate([np.zeros(200, dtype=int), np.ones(200, dtype=int)])
    ds = Dataset(X, y, 2)
    model = fit_mlp(ds, TrainConfig(seed=1, max_epochs=20), hidden=(16,))
    assert abs(accuracy(model, ds) - 0.5) <= 0.1


def test_train_deterministic():
    spec = symmetric_gmm_spec(dim=6, samples_per_class=40)
    ds = make_gmm(spec, seed=0)
    cfg = TrainConfig(seed=5, max_epochs=10)
    a = fit_mlp(ds, cfg, hidden=(12,))
    b = fit_mlp(ds, cfg, hidden=(12,))
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)


def test_train_rejects_empty_or_bad_labels():
    spec = symmetric_gmm_spec(dim=4, samples_per_class=10)
    ds = make_gmm(spec, seed=0)
    model = init_mlp([4, 8, 2], seed=0)
    bad = Dataset(ds.X, ds.y, 3)  # claims 3 classes, model outputs 2
    with pytest.raises(ValueError):
        train(model, bad, bad, TrainConfig(seed=0))


def test_accuracy_counting():
    W = np.array([[1.0], [-1.0]])
    m = ModelParams([W], [np.zeros(2)])
    X = np.array([[1.0], [1.0], [1.0], [-1.0]])
    y = np.array([0, 0, 1, 1])
    assert accuracy(m, Dataset(X, y, 2)) == 0.75


def test_accuracy_constant_predictor_balanced():
    m = ModelParams([np.zeros((2, 3))], [np.array([1.0, 0.0])])
    X = np.zeros((10, 3))
    y = np.array([0, 1] * 5)
    assert accuracy(m, Dataset(X, y, 2)) == 0.5


def test_accuracy_duplication_invariant():
    m = init_mlp([3, 5, 2], seed=0)
    rng = np.random.default_rng(1)
    X = rng.standard_normal((20, 3))
    y = rng.integers(0, 2, 20)
    ds = Dataset(X, y, 2)
    doubled = Dataset(np.concatenate([X, X]), np.concatenate([y, y]), 2)
    assert accuracy(m, ds) == accuracy(m, doubled)


def test_fit_logistic_two_point_sign():
    ds = Dataset(np.array([[1.0], [-1.0]]), np.array([1, 0]), 2)
    lm = fit_logistic(ds)
    assert (lm.weights[1, 0] - lm.weights[0, 0]) > 0


def test_fit_logistic_direction_matches_lda():
    spec = symmetric_gmm_spec(dim=10, cov_scale=0.3, samples_per_class=200)
    ds = make_gmm(spec, seed=0)
    lm = fit_logistic(ds)
    w = lm.weights[0] - lm.weights[1]
    lda = spec.means[0] - spec.means[1]  # isotropic: Sigma^-1 (mu0 - mu1) ~ mu0 - mu1
    cos = w @ lda / (np.linalg.norm(w) * np.linalg.norm(lda))
    assert cos >= 0.99


def test_fit_logistic_duplication_invariant():
    spec = symmetric_gmm_spec(dim=4, cov_scale=1.0, samples_per_class=50)
    ds = make_gmm(spec, seed=2)
    doubled = Dataset(np.concatenate([ds.X, ds.X]),
                      np.concatenate([ds.y, ds.y]), 2)
    a, b = fit_logistic(ds), fit_logistic(doubled)
    assert np.all(np.abs(a.weights - b.weights) < 1e-6)
    assert np.all(np.abs(a.bias - b.bias) < 1e-6)


def test_fit_logistic_matches_long_run_gd_oracle():
    spec = symmetric_gmm_spec(dim=3, cov_scale=1.5, samples_per_class=60)
    ds = make_gmm(spec, seed=4)
    lm = fit_logistic(ds, l2=1e-6)
    theta_fit = np.concatenate([lm.weights.ravel(), lm.bias])
    loss_fit, grad = logistic_objective(theta_fit, ds.X, ds.y, 2, 1e-6)
    assert np.linalg.norm(grad) < 1e-4
    # independent oracle: plain gradient descent from zero, many small steps
    theta = np.zeros_like(theta_fit)
    for _ in range(20000):
        _, g = logistic_objective(theta, ds.X, ds.y, 2, 1e-6)
        theta -= 0.5 * g
    loss_gd, _ = logistic_objective(theta, ds.X, ds.y, 2, 1e-6)
    assert loss_fit <= loss_gd + 1e-6


def test_mlp_classifier_estimator_api():
    spec = symmetric_gmm_spec(dim=5, samples_per_class=50)
    ds = make_gmm(spec, seed=0)
    clf = MLPClassifier(hidden_layers=(16,), batch_size=32, max_epochs=60, seed=0)
    assert clf.get_params()["seed"] == 0
    clf.fit(ds.X, ds.y)
    assert clf.score(ds.X, ds.y) > 0.9
    grads = clf.input_gradient(ds.X[:3], ds.y[:3])
    assert grads.shape == (3, 5)
