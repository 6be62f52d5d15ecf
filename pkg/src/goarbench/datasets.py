"""Synthetic dataset construction (Gaussian mixtures, two-cluster contrast sets,
coordinate rotations) and tabular CSV ingestion."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .validation import as_float_matrix, as_label_vector, new_rng, readonly

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Labeled vectors. Arrays are frozen read-only after construction."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = as_float_matrix(self.X)
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        y = as_label_vector(self.y, self.n_classes)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y lengths differ")
        object.__setattr__(self, "X", readonly(X))
        object.__setattr__(self, "y", readonly(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, indices, name=None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices].copy(), self.y[indices].copy(),
                       self.n_classes, name if name is not None else self.name,
                       dict(self.meta))

    def with_X(self, X) -> "Dataset":
        """Same labels and metadata, new feature matrix."""
        return Dataset(X, self.y.copy(), self.n_classes, self.name, dict(self.meta))


@dataclass(frozen=True)
class GmmSpec:
    """Isotropic Gaussian mixture: one component per class, covariance cov_scale*I."""

    means: np.ndarray            # (n_classes, dim)
    cov_scale: float             # sigma^2
    samples_per_class: int
    weights: np.ndarray | None = None

    def __post_init__(self):
        means = as_float_matrix(self.means, "means")
        object.__setattr__(self, "means", readonly(means))
        if self.cov_scale <= 0:
            raise ValueError("cov_scale must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        w = self.weights
        if w is None:
            w = np.full(means.shape[0], 1.0 / means.shape[0])
        else:
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (means.shape[0],):
                raise ValueError("weights length must match number of means")
            if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
                raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", readonly(w))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]


def symmetric_gmm_spec(dim, cov_scale=0.3, samples_per_class=500,
                       mean_scale=1.0, profile="constant") -> GmmSpec:
    """Two-class spec with means +m and -m.

    profile "constant" gives m = mean_scale * (1,...,1); "linear" grades the
    coordinates from mean_scale down to mean_scale/15 so feature rankings are
    informative.
    """
    if profile == "constant":
        m = np.full(dim, float(mean_scale))
    elif profile == "linear":
        m = np.linspace(float(mean_scale), float(mean_scale) / 15.0, dim)
    else:
        raise ValueError(f"unknown mean profile {profile!r}")
    return GmmSpec(np.stack([m, -m]), cov_scale, samples_per_class)


@dataclass(frozen=True)
class PitfallSpec:
    """Two tight clusters separated by dx; cluster_std=0 recovers a two-point set."""

    dx: np.ndarray
    eps: float
    cluster_std: float = 0.0
    samples_per_class: int = 1

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=np.float64)
        if dx.ndim != 1 or not np.all(np.isfinite(dx)):
            raise ValueError("dx must be a finite vector")
        if np.linalg.norm(dx) == 0:
            raise ValueError("dx must be nonzero")
        object.__setattr__(self, "dx", readonly(dx))
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.cluster_std < 0:
            raise ValueError("cluster_std must be >= 0")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")

    @property
    def dim(self) -> int:
        return self.dx.shape[0]


def make_gmm(spec: GmmSpec, seed) -> Dataset:
    """Draw samples_per_class points per class, x = mu_k + sigma * z."""
    rng = new_rng(seed)
    sigma = np.sqrt(spec.cov_scale)
    blocks, labels = [], []
    for k in range(spec.n_classes):
        z = rng.standard_normal((spec.samples_per_class, spec.dim))
        blocks.append(spec.means[k] + sigma * z)
        labels.append(np.full(spec.samples_per_class, k, dtype=np.int64))
    return Dataset(np.concatenate(blocks), np.concatenate(labels),
                   spec.n_classes, name="gmm",
                   meta={"cov_scale": spec.cov_scale, "seed": seed})


def make_pitfall(spec: PitfallSpec, seed) -> Dataset:
    """Class 0 clustered at the origin, class 1 at dx, isotropic cluster_std."""
    rng = new_rng(seed)
    n = spec.samples_per_class
    centers = [np.zeros(spec.dim), spec.dx]
    blocks, labels = [], []
    for k, c in enumerate(centers):
        z = rng.standard_normal((n, spec.dim))
        blocks.append(c + spec.cluster_std * z)
        labels.append(np.full(n, k, dtype=np.int64))
    return Dataset(np.concatenate(blocks), np.concatenate(labels), 2,
                   name="pitfall",
                   meta={"eps": spec.eps, "cluster_std": spec.cluster_std,
                         "seed": seed})


def random_rotation(dim, seed) -> np.ndarray:
    """Seeded orthogonal matrix with det +1 (QR of a Gaussian matrix)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = new_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def rotate_dataset(dataset: Dataset, R) -> Dataset:
    """Map every sample x to R @ x; labels untouched."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (dataset.dim, dataset.dim):
        raise ValueError(f"rotation shape {R.shape} does not match dim {dataset.dim}")
    return dataset.with_X(dataset.X @ R.T)


def load_csv(path, label_column, feature_columns) -> Dataset:
    """Load a headered CSV: numeric feature columns, categorical label column.

    Labels are mapped to 0..c-1 in first-appearance order. Features are
    standardized per column (zero mean, unit variance, variance floor 1e-12);
    the per-column statistics are stored in dataset.meta.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    feature_columns = list(feature_columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        col_idx = {name: i for i, name in enumerate(header)}
        for name in [label_column, *feature_columns]:
            if name not in col_idx:
                raise ValueError(f"{path}: missing column {name!r}")
        rows, labels = [], []
        label_map: dict[str, int] = {}
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            values = []
            for name in feature_columns:
                cell = row[col_idx[name]]
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"not numeric: {cell!r}") from None
            raw = row[col_idx[label_column]]
            labels.append(label_map.setdefault(raw, len(label_map)))
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len(label_map) < 2:
        raise ValueError(f"{path}: needs at least two distinct labels, "
                         f"found {len(label_map)}")
    X = np.asarray(rows, dtype=np.float64)
    mean = X.mean(axis=0)
    std = np.sqrt(np.maximum(X.var(axis=0), VAR_FLOOR))
    X = (X - mean) / std
    return Dataset(X, np.asarray(labels), len(label_map),
                   name=os.path.basename(path),
                   meta={"feature_mean": mean.tolist(),
                         "feature_std": std.tolist(),
                         "labels": list(label_map)})


def split_indices(y, test_fraction, seed):
    """Deterministic stratified (train, test) index split.

    The total test count is round(fraction * n); per-class counts are assigned
    by largest remainder so classes are represented as evenly as possible.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    y = np.asarray(y)
    n = y.shape[0]
    if n < 2:
        raise ValueError("need at least two samples to split")
    rng = new_rng(seed)
    classes = np.unique(y)
    target_total = int(np.floor(test_fraction * n + 0.5))
    target_total = min(max(target_total, 1), n - 1)
    exact = np.array([test_fraction * np.sum(y == c) for c in classes])
    counts = np.floor(exact).astype(int)
    counts = np.minimum(counts, [np.sum(y == c) for c in classes])
    remainder = exact - counts
    order = np.lexsort((np.arange(len(classes)), -remainder))
    i = 0
    while counts.sum() < target_total:
        c = order[i % len(classes)]
        if counts[c] < np.sum(y == classes[c]):
            counts[c] += 1
        i += 1
    while counts.sum() > target_total:
        c = order[len(classes) - 1 - (i % len(classes))]
        if counts[c] > 0:
            counts[c] -= 1
        i += 1
    test_idx = []
    for c, n_test in zip(classes, counts):
        members = np.flatnonzero(y == c)
        perm = rng.permutation(members.shape[0])
        test_idx.append(members[perm[:n_test]])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def split(dataset: Dataset, test_fraction, seed):
    """Stratified split into disjoint (train, test) datasets covering the input."""
    train_idx, test_idx = split_indices(dataset.y, test_fraction, seed)
    return (dataset.subset(train_idx, name=dataset.name + "/train"),
            dataset.subset(test_idx, name=dataset.name + "/test"))
