"""Per-sample feature vectors: gradient-based explainers, controlled noise
blends, and ground-truth vectors from interpretable linear models.

All explainers attribute the true-class logit (raw, pre-softmax).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .datasets import Dataset
from .models import LinearModel, ModelParams, input_gradients
from .validation import as_float_matrix, new_rng, readonly


@dataclass(frozen=True)
class Attribution:
    """One feature vector per dataset sample."""

    vectors: np.ndarray  # (n, d)
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = as_float_matrix(self.vectors, "vectors")
        object.__setattr__(self, "vectors", readonly(v))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, indices) -> "Attribution":
        return Attribution(self.vectors[np.asarray(indices, dtype=np.int64)].copy(),
                           self.method, dict(self.params))


def attr_grad(model: ModelParams, dataset: Dataset) -> Attribution:
    """v_i = d logit[y_i] / d x_i."""
    return Attribution(input_gradients(model, dataset.X, dataset.y), "grad")


def attr_grad_x_input(model: ModelParams, dataset: Dataset) -> Attribution:
    """v_i = (d logit[y_i] / d x_i) * x_i elementwise."""
    grads = input_gradients(model, dataset.X, dataset.y)
    return Attribution(grads * dataset.X, "grad_x_input")


def attr_smoothgrad(model: ModelParams, dataset: Dataset, n_samples=16,
                    noise_std=0.3, seed=0) -> Attribution:
    """Mean gradient over n_samples Gaussian-jittered copies of each input.

    noise_std=0 takes the plain-gradient path (no draws), so it matches
    attr_grad bit for bit.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    params = {"n_samples": n_samples, "noise_std": noise_std, "seed": seed}
    if noise_std == 0.0:
        grads = input_gradients(model, dataset.X, dataset.y)
        return Attribution(grads, "smoothgrad", params)
    rng = new_rng(seed)
    total = np.zeros_like(dataset.X)
    for _ in range(n_samples):
        eps = rng.standard_normal(dataset.X.shape) * noise_std
        total += input_gradients(model, dataset.X + eps, dataset.y)
    return Attribution(total / n_samples, "smoothgrad", params)


def attr_integrated_gradients(model: ModelParams, dataset: Dataset,
                              baseline=None, n_steps=64) -> Attribution:
    """Right-endpoint Riemann approximation of the path integral of gradients
    from the baseline (default zero vector) to each sample."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if baseline is None:
        baseline = np.zeros(dataset.dim)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != (dataset.dim,):
        raise ValueError(f"baseline shape {baseline.shape} does not match "
                         f"dim {dataset.dim}")
    delta = dataset.X - baseline
    total = np.zeros_like(dataset.X)
    for s in range(1, n_steps + 1):
        total += input_gradients(model, baseline + (s / n_steps) * delta, dataset.y)
    return Attribution(delta * total / n_steps, "integrated_gradients",
                       {"n_steps": n_steps})


def attr_random(dataset: Dataset, seed=0) -> Attribution:
    """Uniform unit-sphere direction per sample; the comparison lower bound."""
    rng = new_rng(seed)
    g = rng.standard_normal((dataset.n, dataset.dim))
    v = g / np.linalg.norm(g, axis=1, keepdims=True)
    return Attribution(v, "random", {"seed": seed})


@dataclass(frozen=True)
class NoiseBlend:
    lam: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


def blend_with_noise(attr: Attribution, blend: NoiseBlend) -> Attribution:
    """Per sample: lam * v_hat + (1 - lam) * w with w uniform on the unit
    sphere. The output is deliberately not re-normalized: its norm carries the
    mixing level."""
    norms = np.linalg.norm(attr.vectors, axis=1, keepdims=True)
    if blend.lam > 0 and np.any(norms == 0):
        bad = int(np.flatnonzero(norms.ravel() == 0)[0])
        raise ValueError(f"cannot blend zero-length vector (sample {bad})")
    rng = new_rng(blend.seed)
    g = rng.standard_normal(attr.vectors.shape)
    w = g / np.linalg.norm(g, axis=1, keepdims=True)
    if blend.lam == 0.0:
        out = w
    elif blend.lam == 1.0:
        out = attr.vectors / norms
    else:
        out = blend.lam * (attr.vectors / norms) + (1.0 - blend.lam) * w
    return Attribution(out, f"{attr.method}+blend",
                       {**attr.params, "lambda": blend.lam, "blend_seed": blend.seed})


def ground_truth_from_linear(lm: LinearModel, dataset: Dataset,
                             multiply_by_input=True) -> Attribution:
    """Ground-truth vector from a linear model's coefficients.

    v_i = (w[y_i] - mean of the other class rows) elementwise* x_i; for a
    binary model this is the usual coefficient-contrast times input. With
    multiply_by_input=False the contrast row itself is returned.
    """
    c = lm.weights.shape[0]
    if lm.weights.shape[1] != dataset.dim:
        raise ValueError("linear model dimension does not match dataset")
    total = lm.weights.sum(axis=0)
    contrast = np.stack([(lm.weights[k] - (total - lm.weights[k]) / (c - 1))
                         for k in range(c)])
    rows = contrast[dataset.y]
    v = rows * dataset.X if multiply_by_input else rows.copy()
    return Attribution(v, "ground_truth", {"multiply_by_input": multiply_by_input})


class AttributionMethod(BaseEstimator):
    """Base for configurable explainers; subclasses set `name` and implement
    explain(model, dataset) -> Attribution."""

    name = "base"

    def explain(self, model: ModelParams, dataset: Dataset) -> Attribution:
        raise NotImplementedError


class InputGradient(AttributionMethod):
    name = "grad"

    def explain(self, model, dataset):
        return attr_grad(model, dataset)


class GradTimesInput(AttributionMethod):
    name = "grad_x_input"

    def explain(self, model, dataset):
        return attr_grad_x_input(model, dataset)


class SmoothGrad(AttributionMethod):
    name = "smoothgrad"

    def __init__(self, n_samples=16, noise_std=0.3, seed=0):
        self.n_samples = n_samples
        self.noise_std = noise_std
        self.seed = seed

    def explain(self, model, dataset):
        return attr_smoothgrad(model, dataset, self.n_samples, self.noise_std,
                               self.seed)


class IntegratedGradients(AttributionMethod):
    name = "integrated_gradients"

    def __init__(self, baseline=None, n_steps=64):
        self.baseline = baseline
        self.n_steps = n_steps

    def explain(self, model, dataset):
        return attr_integrated_gradients(model, dataset, self.baseline,
                                         self.n_steps)


class RandomDirection(AttributionMethod):
    name = "random"

    def __init__(self, seed=0):
        self.seed = seed

    def explain(self, model, dataset):
        return attr_random(dataset, self.seed)


METHOD_REGISTRY = {
    "grad": InputGradient,
    "grad_x_input": GradTimesInput,
    "smoothgrad": SmoothGrad,
    "integrated_gradients": IntegratedGradients,
    "random": RandomDirection,
}
