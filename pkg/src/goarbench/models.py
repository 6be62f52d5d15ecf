"""Dense ReLU network with exact reverse-mode gradients (parameters and inputs),
seeded training with early stopping, and multinomial logistic fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin

from .datasets import Dataset, split_indices
from .validation import as_float_matrix, as_float_vector, check_dim, new_rng

DEFAULT_HIDDEN = (128, 128, 128)


@dataclass
class ModelParams:
    """Layer weights/biases; hidden activations are ReLU, output is raw logits."""

    weights: list
    biases: list

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be non-empty and aligned")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent weight/bias shapes")
            if i > 0 and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input width {W.shape[1]} does not "
                                 f"match previous output {self.weights[i-1].shape[0]}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
            self.weights[i] = W
            self.biases[i] = b

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams([W.copy() for W in self.weights],
                           [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 256
    max_epochs: int = 100
    early_stop_patience: int = 5
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_mlp(layer_sizes, seed) -> ModelParams:
    """Symmetric uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer."""
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if any(int(s) != s or s < 1 for s in sizes):
        raise ValueError("layer sizes must be positive integers")
    rng = new_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ModelParams(weights, biases)


def forward_batch(model: ModelParams, X) -> np.ndarray:
    """Logits for a batch, shape (n, c)."""
    A = as_float_matrix(X)
    check_dim(A, model.input_dim)
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        A = A @ W.T + b
        if i < last:
            A = np.maximum(A, 0.0)
    return A


def forward(model: ModelParams, x) -> np.ndarray:
    """Logits for a single input vector."""
    x = as_float_vector(x)
    return forward_batch(model, x[None, :])[0]


def _forward_trace(model, X):
    """Forward pass keeping pre-activations for backprop."""
    A, zs = X, []
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        Z = A @ W.T + b
        zs.append(Z)
        A = np.maximum(Z, 0.0) if i < last else Z
    return A, zs


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_grads(model, X, y):
    """Mean softmax cross-entropy and its parameter gradients."""
    n = X.shape[0]
    logits, zs = _forward_trace(model, X)
    P = _softmax(logits)
    loss = -np.mean(np.log(np.maximum(P[np.arange(n), y], 1e-300)))
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    dW = [None] * len(model.weights)
    db = [None] * len(model.weights)
    acts = [X] + [np.maximum(Z, 0.0) for Z in zs[:-1]]
    for i in range(len(model.weights) - 1, -1, -1):
        dW[i] = G.T @ acts[i]
        db[i] = G.sum(axis=0)
        if i > 0:
            G = (G @ model.weights[i]) * (zs[i - 1] > 0.0)
    return loss, dW, db


def input_gradients(model: ModelParams, X, class_indices) -> np.ndarray:
    """Per-sample gradient of logit[class] w.r.t. the input, shape (n, d)."""
    X = as_float_matrix(X)
    check_dim(X, model.input_dim)
    class_indices = np.asarray(class_indices, dtype=np.int64)
    if class_indices.ndim == 0:
        class_indices = np.full(X.shape[0], int(class_indices))
    if class_indices.min() < 0 or class_indices.max() >= model.output_dim:
        raise ValueError("class index out of range")
    _, zs = _forward_trace(model, X)
    G = np.zeros((X.shape[0], model.output_dim))
    G[np.arange(X.shape[0]), class_indices] = 1.0
    for i in range(len(model.weights) - 1, 0, -1):
        G = (G @ model.weights[i]) * (zs[i - 1] > 0.0)
    return G @ model.weights[0]


def input_gradient(model: ModelParams, x, class_index) -> np.ndarray:
    """Gradient of logit[class_index] w.r.t. a single input vector."""
    x = as_float_vector(x)
    return input_gradients(model, x[None, :], int(class_index))[0]


def accuracy(model: ModelParams, dataset: Dataset) -> float:
    """Fraction of samples whose argmax logit equals the label.

    Ties resolve to the lowest class index.
    """
    logits = forward_batch(model, dataset.X)
    return float(np.mean(np.argmax(logits, axis=1) == dataset.y))


class _Adam:
    def __init__(self, model, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [[np.zeros_like(W) for W in model.weights],
                  [np.zeros_like(b) for b in model.biases]]
        self.v = [[np.zeros_like(W) for W in model.weights],
                  [np.zeros_like(b) for b in model.biases]]

    def step(self, model, dW, db):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for params, grads, m, v in ((model.weights, dW, self.m[0], self.v[0]),
                                    (model.biases, db, self.m[1], self.v[1])):
            for i, g in enumerate(grads):
                m[i] = self.beta1 * m[i] + (1 - self.beta1) * g
                v[i] = self.beta2 * v[i] + (1 - self.beta2) * g * g
                params[i] -= self.lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + self.eps)


class _Sgd:
    def __init__(self, model, lr):
        self.lr = lr

    def step(self, model, dW, db):
        for i in range(len(model.weights)):
            model.weights[i] -= self.lr * dW[i]
            model.biases[i] -= self.lr * db[i]


def _check_labels(dataset, model):
    if dataset.n_classes > model.output_dim:
        raise ValueError(f"dataset has {dataset.n_classes} classes but model "
                         f"outputs {model.output_dim}")
    if dataset.dim != model.input_dim:
        raise ValueError(f"dataset dim {dataset.dim} does not match model "
                         f"input {model.input_dim}")


def cross_entropy(model: ModelParams, dataset: Dataset) -> float:
    """Mean softmax cross-entropy on a dataset."""
    P = _softmax(forward_batch(model, dataset.X))
    picked = P[np.arange(dataset.n), dataset.y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def _val_key(model, val_set):
    # accuracy first, loss as tie-break so progress registers after the
    # (coarse) accuracy saturates on small validation sets
    return (accuracy(model, val_set), -cross_entropy(model, val_set))


def train(model: ModelParams, train_set: Dataset, val_set: Dataset,
          cfg: TrainConfig, input_mask_prob=0.0) -> ModelParams:
    """Seeded minibatch training; returns the parameters with the best
    validation accuracy seen (initial parameters included), using validation
    loss to break accuracy ties.

    Stops after early_stop_patience epochs without improvement or at
    max_epochs. With input_mask_prob > 0, each training-batch coordinate is
    independently zeroed with that probability (validation stays clean); the
    prob-0 path draws no masks, so it is bit-identical to plain training.
    """
    for ds in (train_set, val_set):
        _check_labels(ds, model)
    rng = new_rng(cfg.seed)
    params = model.copy()
    opt = _Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" \
        else _Sgd(params, cfg.learning_rate)
    best = params.copy()
    best_key = _val_key(params, val_set)
    stale = 0
    X, y = train_set.X, train_set.y
    for _ in range(cfg.max_epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb = X[idx]
            if input_mask_prob > 0.0:
                Xb = Xb * (rng.random(Xb.shape) >= input_mask_prob)
            _, dW, db = _loss_and_grads(params, Xb, y[idx])
            opt.step(params, dW, db)
        key = _val_key(params, val_set)
        if key > best_key:
            best, best_key, stale = params.copy(), key, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return best


def fit_mlp(dataset: Dataset, cfg: TrainConfig, hidden=DEFAULT_HIDDEN,
            val_fraction=0.2, input_mask_prob=0.0) -> ModelParams:
    """Init + train on an internal stratified train/val split (seeded)."""
    tr_idx, va_idx = split_indices(dataset.y, val_fraction, cfg.seed)
    model = init_mlp([dataset.dim, *hidden, dataset.n_classes], cfg.seed)
    return train(model, dataset.subset(tr_idx), dataset.subset(va_idx), cfg,
                 input_mask_prob=input_mask_prob)


@dataclass
class LinearModel:
    """Multinomial logistic model: logits = weights @ x + bias."""

    weights: np.ndarray   # (c, d)
    bias: np.ndarray      # (c,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (c, d) with bias (c,)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite linear model parameters")

    def logits(self, X) -> np.ndarray:
        return as_float_matrix(X) @ self.weights.T + self.bias


def logistic_objective(theta, X, y, n_classes, l2):
    """Mean softmax cross-entropy + (l2/2)*||W||^2 (bias unpenalized)."""
    n, d = X.shape
    W = theta[:n_classes * d].reshape(n_classes, d)
    b = theta[n_classes * d:]
    logits = X @ W.T + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    loss = float(np.mean(logZ - logits[np.arange(n), y]) + 0.5 * l2 * np.sum(W * W))
    P = _softmax(logits)
    G = P
    G[np.arange(n), y] -= 1.0
    G /= n
    gW = G.T @ X + l2 * W
    gb = G.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


def fit_logistic(train_set: Dataset, cfg: TrainConfig = TrainConfig(),
                 l2=1e-6, grad_tol=1e-4) -> LinearModel:
    """Fit multinomial logistic regression to gradient norm < grad_tol.

    The objective is strictly convex (small ridge), so L-BFGS from zero is
    deterministic; plain gradient-descent polishing kicks in if the line
    search stops early.
    """
    X, y, c = train_set.X, train_set.y, train_set.n_classes
    theta0 = np.zeros(c * train_set.dim + c)
    res = minimize(logistic_objective, theta0, args=(X, y, c, l2),
                   jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "ftol": 1e-15, "gtol": grad_tol / 10})
    theta = res.x
    loss, grad = logistic_objective(theta, X, y, c, l2)
    step = 1.0
    for _ in range(200_000):
        if np.linalg.norm(grad) < grad_tol:
            break
        new_theta = theta - step * grad
        new_loss, new_grad = logistic_objective(new_theta, X, y, c, l2)
        if new_loss <= loss:
            theta, loss, grad = new_theta, new_loss, new_grad
            step *= 1.2
        else:
            step *= 0.5
    else:
        raise RuntimeError("logistic fit did not reach the gradient tolerance")
    d = train_set.dim
    return LinearModel(theta[:c * d].reshape(c, d), theta[c * d:])


class MLPClassifier(BaseEstimator, ClassifierMixin):
    """Scikit-learn style wrapper around the seeded MLP trainer.

    Exposes input gradients, which stock estimators do not.
    """

    def __init__(self, hidden_layers=DEFAULT_HIDDEN, learning_rate=3e-4,
                 batch_size=256, max_epochs=100, early_stop_patience=5,
                 optimizer="adam", validation_fraction=0.2,
                 input_mask_prob=0.0, seed=0):
        self.hidden_layers = hidden_layers
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.optimizer = optimizer
        self.validation_fraction = validation_fraction
        self.input_mask_prob = input_mask_prob
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs,
                           self.early_stop_patience, self.optimizer, self.seed)

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.unique(y)
        n_classes = int(y.max()) + 1
        ds = Dataset(X, y, n_classes)
        self.params_ = fit_mlp(ds, self._config(), hidden=tuple(self.hidden_layers),
                               val_fraction=self.validation_fraction,
                               input_mask_prob=self.input_mask_prob)
        return self

    def decision_function(self, X):
        return forward_batch(self.params_, X)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def input_gradient(self, X, class_indices):
        return input_gradients(self.params_, X, class_indices)
