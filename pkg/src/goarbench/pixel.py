"""Pixel-coordinate perturbation strategies: fixed-value masking with
retraining, proxy-model evaluation under random masking, and noisy
linear (grid Laplace) imputation."""
from __future__ import annotations

import numpy as np
from scipy.sparse import lil_matrix
from scipy.sparse.linalg import spsolve

from .datasets import Dataset, split_indices
from .evaluation import DegradationCurve, top_k_count
from .models import TrainConfig, fit_mlp, forward_batch
from .validation import as_float_vector, per_sample_rng

STRATEGIES = ("roar", "evalx", "road")


def top_k_mask(v, k, by_magnitude=False) -> np.ndarray:
    """Binary mask with round(k*d) ones at the highest-ranked coordinates.

    Ranking uses the raw value by default (by_magnitude ranks |v|); ties break
    toward the lowest index.
    """
    v = as_float_vector(v)
    m = top_k_count(k, v.shape[0])
    score = np.abs(v) if by_magnitude else v
    order = np.argsort(-score, kind="stable")
    mask = np.zeros(v.shape[0], dtype=np.int8)
    mask[order[:m]] = 1
    return mask


def roar_impute(x, mask) -> np.ndarray:
    """Zero out masked coordinates: (1 - mask) * x."""
    x = as_float_vector(x)
    mask = np.asarray(mask)
    if mask.shape != x.shape:
        raise ValueError("mask shape does not match input")
    return x * (1 - mask)


def _grid_neighbors(h, w):
    """4-neighborhoods of an h*w grid in row-major flat indexing."""
    nbrs = [[] for _ in range(h * w)]
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if r > 0:
                nbrs[i].append(i - w)
            if r < h - 1:
                nbrs[i].append(i + w)
            if c > 0:
                nbrs[i].append(i - 1)
            if c < w - 1:
                nbrs[i].append(i + 1)
    return nbrs


def road_impute(x, mask, grid_shape, noise_std=0.0, rng=None) -> np.ndarray:
    """Noisy linear imputation on a grid.

    Masked cells solve the discrete Laplace system (each equals the mean of
    its 4-neighbors, unmasked cells act as boundary values), then receive
    N(0, noise_std^2) noise. A fully masked input falls back to the global
    mean. Unmasked entries are untouched.
    """
    x = as_float_vector(x)
    mask = np.asarray(mask).astype(bool)
    h, w = grid_shape
    if h * w != x.shape[0]:
        raise ValueError(f"grid {h}x{w} does not match vector length {x.shape[0]}")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    out = x.copy()
    masked = np.flatnonzero(mask)
    if masked.size == 0:
        return out
    if masked.size == x.shape[0]:
        out[:] = x.mean()
    else:
        nbrs = _grid_neighbors(h, w)
        pos = {int(i): j for j, i in enumerate(masked)}
        A = lil_matrix((masked.size, masked.size))
        b = np.zeros(masked.size)
        for j, i in enumerate(masked):
            A[j, j] = len(nbrs[i])
            for nb in nbrs[i]:
                if mask[nb]:
                    A[j, pos[nb]] -= 1.0
                else:
                    b[j] += x[nb]
        out[masked] = spsolve(A.tocsr(), b)
    if noise_std > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        out[masked] += noise_std * rng.standard_normal(masked.size)
    return out


def evalx_train_proxy(train_set: Dataset, cfg: TrainConfig, mask_prob=0.5,
                      hidden=None):
    """Train a proxy model robust to masking: each training-batch coordinate
    is independently zeroed with probability mask_prob."""
    if not 0.0 <= mask_prob <= 1.0:
        raise ValueError("mask_prob must lie in [0, 1]")
    kwargs = {} if hidden is None else {"hidden": hidden}
    return fit_mlp(train_set, cfg, input_mask_prob=mask_prob, **kwargs)


def _impute_dataset(ds: Dataset, attr, k, strategy, grid_shape, noise_std,
                    by_magnitude, seed) -> Dataset:
    X = np.empty_like(ds.X)
    for i in range(ds.n):
        mask = top_k_mask(attr.vectors[i], k, by_magnitude=by_magnitude)
        if strategy == "road":
            rng = per_sample_rng(seed, i)
            X[i] = road_impute(ds.X[i], mask, grid_shape, noise_std, rng)
        else:
            X[i] = roar_impute(ds.X[i], mask)
    return ds.with_X(X)


def run_pixel_strategy(strategy, dataset: Dataset, attr, fractions,
                       cfg: TrainConfig, grid_shape=None, test_fraction=0.2,
                       by_magnitude=False, road_noise_std=0.01,
                       hidden=None) -> DegradationCurve:
    """Degradation curve for a pixel strategy over ascending mask fractions.

    roar/road retrain a fresh seeded model per level on the imputed train set
    and score the imputed test set; evalx trains one masking-robust proxy and
    scores masked inputs without retraining. Level 0 is the clean baseline.
    The cumulative column tracks test samples ever misclassified, as in the
    geometric benchmark.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    fractions = [float(f) for f in fractions]
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be strictly ascending")
    if any(not 0 < f <= 1 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    if strategy == "road":
        if grid_shape is None:
            grid_shape = (1, dataset.dim)
        h, w = grid_shape
        if h * w != dataset.dim:
            raise ValueError("grid_shape does not match dataset dimension")
    if attr.n != dataset.n or attr.dim != dataset.dim:
        raise ValueError("attribution does not align with the dataset")
    tr_idx, te_idx = split_indices(dataset.y, test_fraction, cfg.seed)
    train_set, test_set = dataset.subset(tr_idx), dataset.subset(te_idx)
    attr_tr, attr_te = attr.subset(tr_idx), attr.subset(te_idx)
    kwargs = {} if hidden is None else {"hidden": hidden}
    proxy = None
    if strategy == "evalx":
        proxy = evalx_train_proxy(train_set, cfg, hidden=hidden)
    lost = np.zeros(test_set.n, dtype=bool)
    levels, acc_out, cum_out = [0.0], [], []
    for k in [None] + fractions:
        if k is None:
            tr, te = train_set, test_set
        else:
            levels.append(k)
            te = _impute_dataset(test_set, attr_te, k, strategy, grid_shape,
                                 road_noise_std, by_magnitude, cfg.seed)
            if strategy != "evalx":
                tr = _impute_dataset(train_set, attr_tr, k, strategy, grid_shape,
                                     road_noise_std, by_magnitude, cfg.seed)
        model = proxy if strategy == "evalx" else fit_mlp(tr, cfg, **kwargs)
        preds = np.argmax(forward_batch(model, te.X), axis=1)
        lost |= preds != te.y
        acc_out.append(float(np.mean(preds == te.y)))
        cum_out.append(float(np.mean(lost)))
    return DegradationCurve(strategy, attr.method, tuple(levels),
                            tuple(acc_out), tuple(cum_out), seed=cfg.seed,
                            meta={"by_magnitude": by_magnitude})
