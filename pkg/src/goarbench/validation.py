"""Input-validation and seeding helpers shared across the package."""
from __future__ import annotations

import numpy as np


def as_float_matrix(X, name="X") -> np.ndarray:
    """Coerce to a finite 2-d float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {X.shape}")
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def as_float_vector(x, name="x") -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {x.shape}")
    if x.size and not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def as_label_vector(y, n_classes, name="y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {y.shape}")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"{name} labels must lie in [0, {n_classes})")
    return y


def check_dim(x, dim, name="x"):
    if x.shape[-1] != dim:
        raise ValueError(f"{name} has dimension {x.shape[-1]}, expected {dim}")


def new_rng(seed) -> np.random.Generator:
    """Deterministic generator for an integer seed (or a seed sequence)."""
    return np.random.Generator(np.random.PCG64(seed))


def per_sample_rng(base_seed, index) -> np.random.Generator:
    """Generator derived from (base seed, sample index), stable under reordering."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((base_seed, index))))


def readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a
