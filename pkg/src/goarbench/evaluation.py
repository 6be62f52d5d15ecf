"""Degradation curves, the geometric perturb-retrain loop, rank/sign agreement
metrics against ground-truth features, and the correlation table tying the two
together."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .datasets import Dataset, split_indices
from .diffusion import (DiffusionSchedule, GmmPrior, ProjectionConfig,
                        perturb_dataset)
from .models import TrainConfig, accuracy, fit_mlp, forward_batch
from .validation import as_float_vector, new_rng

AGREEMENT_METRICS = ("FA", "RA", "SA", "SRA", "RC", "PRA")


@dataclass(frozen=True)
class DegradationCurve:
    """Accuracy and cumulative-misclassification fractions over a level grid.

    The first point is the clean baseline (level 0).
    """

    strategy: str
    method: str
    levels: tuple
    accuracy: tuple
    cumulative: tuple
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.levels) == len(self.accuracy) == len(self.cumulative)):
            raise ValueError("curve fields must have equal length")
        if len(self.levels) == 0:
            raise ValueError("curve must contain at least one point")
        if self.levels[0] != 0:
            raise ValueError("first curve point must be the clean baseline")
        if any(b < a - 1e-12 for a, b in zip(self.cumulative, self.cumulative[1:])):
            raise ValueError("cumulative misclassification must be non-decreasing")


def cumulative_from_predictions(correct) -> np.ndarray:
    """Fraction of samples wrong at *any* level up to each column.

    `correct` is an (n samples, L levels) boolean matrix.
    """
    correct = np.asarray(correct, dtype=bool)
    if correct.ndim != 2:
        raise ValueError("expected an (n, L) matrix")
    ever_wrong = np.cumsum(~correct, axis=1) > 0
    return ever_wrong.mean(axis=0)


def _ranking(v, by_magnitude):
    """Indices in score order, best first; ties go to the lowest index."""
    score = np.abs(v) if by_magnitude else v
    return np.argsort(-score, kind="stable")


def top_k_count(k_fraction, dim) -> int:
    """round(k*d) with half rounding up."""
    if not 0 < k_fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    return int(math.floor(k_fraction * dim + 0.5))


def topk_agreement(v, v_gt, k, by_magnitude=False):
    """(FA, RA, SA, SRA) for top-k feature sets.

    FA: shared membership; RA: same feature at the same rank; SA: shared
    membership with matching sign; SRA: same rank and matching sign.
    """
    v = as_float_vector(v, "v")
    v_gt = as_float_vector(v_gt, "v_gt")
    if v.shape != v_gt.shape:
        raise ValueError("vectors must have the same length")
    if not 1 <= k <= v.shape[0]:
        raise ValueError(f"k={k} out of range for dimension {v.shape[0]}")
    top = _ranking(v, by_magnitude)[:k]
    top_gt = _ranking(v_gt, by_magnitude)[:k]
    in_both = np.intersect1d(top, top_gt)
    fa = in_both.size / k
    same_rank = top == top_gt
    ra = np.count_nonzero(same_rank) / k
    sign_ok = np.sign(v[in_both]) == np.sign(v_gt[in_both])
    sa = np.count_nonzero(sign_ok) / k
    sra_ok = same_rank & (np.sign(v[top]) == np.sign(v_gt[top]))
    sra = np.count_nonzero(sra_ok) / k
    return fa, ra, sa, sra


def rank_metrics(v, v_gt):
    """(RC, PRA): Spearman rank correlation (average-rank ties) and the
    fraction of unordered feature pairs whose order relation matches; ties
    count as matching only when tied on both sides."""
    v = as_float_vector(v, "v")
    v_gt = as_float_vector(v_gt, "v_gt")
    if v.shape != v_gt.shape:
        raise ValueError("vectors must have the same length")
    rc = float(stats.spearmanr(v, v_gt).statistic)
    rel = np.sign(v[:, None] - v[None, :])
    rel_gt = np.sign(v_gt[:, None] - v_gt[None, :])
    iu = np.triu_indices(v.shape[0], k=1)
    pra = float(np.mean(rel[iu] == rel_gt[iu]))
    return rc, pra


@dataclass(frozen=True)
class AgreementScores:
    """Six agreement metrics, averaged over samples; per-sample rows kept for
    sample-axis bootstrapping."""

    fa: float
    ra: float
    sa: float
    sra: float
    rc: float
    pra: float
    k: int
    per_sample: dict = field(default_factory=dict, repr=False)

    def as_tuple(self):
        return (self.fa, self.ra, self.sa, self.sra, self.rc, self.pra)


def agreement_scores(attr, attr_gt, k=None, by_magnitude=False) -> AgreementScores:
    """Average the six metrics over samples (per-instance ground truth)."""
    if attr.vectors.shape != attr_gt.vectors.shape:
        raise ValueError("attribution shapes differ")
    d = attr.dim
    if k is None:
        k = max(1, top_k_count(0.25, d))
    rows = {name: np.empty(attr.n) for name in AGREEMENT_METRICS}
    for i in range(attr.n):
        fa, ra, sa, sra = topk_agreement(attr.vectors[i], attr_gt.vectors[i], k,
                                         by_magnitude)
        rc, pra = rank_metrics(attr.vectors[i], attr_gt.vectors[i])
        for name, val in zip(AGREEMENT_METRICS, (fa, ra, sa, sra, rc, pra)):
            rows[name][i] = val
    means = {name: float(np.mean(rows[name])) for name in AGREEMENT_METRICS}
    return AgreementScores(means["FA"], means["RA"], means["SA"], means["SRA"],
                           means["RC"], means["PRA"], k, per_sample=rows)


def performance_drop_score(curve: DegradationCurve) -> float:
    """Normalized area under the degradation series.

    Geometric (cumulative-counting) strategies integrate the cumulative
    misclassification fraction; pixel strategies integrate the accuracy drop
    relative to the clean baseline. Trapezoid rule over the level grid,
    divided by the grid span.
    """
    levels = np.asarray(curve.levels, dtype=np.float64)
    if levels.size < 2:
        return 0.0
    if curve.strategy == "goar":
        series = np.asarray(curve.cumulative, dtype=np.float64)
    else:
        acc = np.asarray(curve.accuracy, dtype=np.float64)
        series = acc[0] - acc
    return float(np.trapezoid(series, levels) / (levels[-1] - levels[0]))


@dataclass(frozen=True)
class CorrelationTable:
    """Pearson r (and bootstrap std) between per-method drop scores and each
    agreement metric, one row per benchmark strategy."""

    benchmarks: tuple
    metrics: tuple
    r: dict          # (benchmark, metric) -> float (nan when undefined)
    std: dict        # (benchmark, metric) -> float


def _pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def correlation_table(drop_scores, agreements, n_bootstrap=1000, seed=0,
                      axis="methods") -> CorrelationTable:
    """Correlate drop scores with agreement metrics across methods.

    drop_scores: {benchmark: {method: score}}; agreements: {method:
    AgreementScores}. Bootstrap resamples methods by default, or test samples
    (axis="samples", using the per-sample agreement rows).
    """
    methods = sorted(agreements)
    if len(methods) < 3:
        raise ValueError("need at least three methods to correlate")
    if axis not in ("methods", "samples"):
        raise ValueError(f"unknown bootstrap axis {axis!r}")
    rng = new_rng(seed)
    r_out, std_out = {}, {}
    benchmarks = tuple(sorted(drop_scores))
    for bench in benchmarks:
        drops = np.array([drop_scores[bench][m] for m in methods])
        for mi, metric in enumerate(AGREEMENT_METRICS):
            scores = np.array([agreements[m].as_tuple()[mi] for m in methods])
            r_out[(bench, metric)] = _pearson(drops, scores)
            draws = []
            if axis == "methods":
                for _ in range(n_bootstrap):
                    pick = rng.integers(0, len(methods), len(methods))
                    r = _pearson(drops[pick], scores[pick])
                    if not math.isnan(r):
                        draws.append(r)
            else:
                per_sample = np.stack([agreements[m].per_sample[metric]
                                       for m in methods])
                n = per_sample.shape[1]
                for _ in range(n_bootstrap):
                    pick = rng.integers(0, n, n)
                    r = _pearson(drops, per_sample[:, pick].mean(axis=1))
                    if not math.isnan(r):
                        draws.append(r)
            std_out[(bench, metric)] = float(np.std(draws)) if draws else float("nan")
    return CorrelationTable(benchmarks, AGREEMENT_METRICS, r_out, std_out)


def run_goar(dataset: Dataset, attr, strengths, cfg: TrainConfig,
             prior: GmmPrior, schedule: DiffusionSchedule,
             projection: ProjectionConfig = ProjectionConfig(),
             project=True, normalize=True, test_fraction=0.2,
             hidden=None) -> DegradationCurve:
    """Perturb train+test along -v at each strength, retrain, and count the
    cumulative number of test samples ever misclassified.

    A test sample joins the lost set permanently once misclassified at any
    strength up to the current one, so the cumulative series is monotone even
    when plain accuracy rebounds. Level 0 is the clean baseline. With
    project=False the manifold projection is skipped (pure feature
    subtraction), the ablation configuration.
    """
    strengths = [float(s) for s in strengths]
    if any(b <= a for a, b in zip(strengths, strengths[1:])):
        raise ValueError("strengths must be strictly ascending")
    if not strengths or strengths[0] != 0.0:
        strengths = [0.0] + strengths
    tr_idx, te_idx = split_indices(dataset.y, test_fraction, cfg.seed)
    train_set, test_set = dataset.subset(tr_idx), dataset.subset(te_idx)
    attr_tr, attr_te = attr.subset(tr_idx), attr.subset(te_idx)
    kwargs = {} if hidden is None else {"hidden": hidden}
    lost = np.zeros(test_set.n, dtype=bool)
    acc_out, cum_out = [], []
    for s in strengths:
        if s == 0.0:
            tr, te = train_set, test_set
        else:
            tr = perturb_dataset(train_set, attr_tr, s, projection, prior,
                                 schedule, normalize=normalize, project=project)
            te = perturb_dataset(test_set, attr_te, s, projection, prior,
                                 schedule, normalize=normalize, project=project)
        model = fit_mlp(tr, cfg, **kwargs)
        preds = np.argmax(forward_batch(model, te.X), axis=1)
        lost |= preds != te.y
        acc_out.append(float(np.mean(preds == te.y)))
        cum_out.append(float(np.mean(lost)))
    return DegradationCurve("goar", attr.method, tuple(strengths),
                            tuple(acc_out), tuple(cum_out), seed=cfg.seed,
                            meta={"projection": project,
                                  "normalize": normalize})
