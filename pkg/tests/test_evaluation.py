import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from goarbench.attribution import Attribution
from goarbench.evaluation import (AgreementScores, DegradationCurve,
                                  agreement_scores, correlation_table,
                                  cumulative_from_predictions,
                                  performance_drop_score, rank_metrics,
                                  topk_agreement)


def curve(strategy, levels, acc, cum, method="m"):
    return DegradationCurve(strategy, method, tuple(levels), tuple(acc),
                            tuple(cum))


def test_cumulative_all_correct():
    out = cumulative_from_predictions(np.ones((5, 4), dtype=bool))
    assert np.array_equal(out, np.zeros(4))


def test_cumulative_counts_recovered_samples():
    # one sample wrong at level 1 then right again: still counted afterwards
    correct = np.array([[True, False, True]])
    assert np.array_equal(cumulative_from_predictions(correct), [0.0, 1.0, 1.0])


def test_cumulative_hand_counted():
    correct = np.array([[True, False], [False, True]])
    assert np.array_equal(cumulative_from_predictions(correct), [0.5, 1.0])


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 8), st.integers(1, 6))))
def test_cumulative_monotone_and_dominates_error_rate(correct):
    out = cumulative_from_predictions(correct)
    assert np.all(np.diff(out) >= 0)
    assert np.all(out <= 1.0)
    err = 1.0 - correct.mean(axis=0)
    assert np.all(out >= err - 1e-12)


def test_topk_identical_vectors():
    v = np.array([3.0, -1.0, 2.0, 0.5])
    assert topk_agreement(v, v, 2) == (1.0, 1.0, 1.0, 1.0)


def test_topk_disjoint_sets():
    v = np.array([5.0, 4.0, 0.0, 0.0])
    g = np.array([0.0, 0.0, 4.0, 5.0])
    assert topk_agreement(v, g, 2) == (0.0, 0.0, 0.0, 0.0)


def test_topk_swapped_ranks():
    v = np.array([3.0, 2.0, 1.0, 0.0])
    g = np.array([2.0, 3.0, 1.0, 0.0])
    fa, ra, sa, sra = topk_agreement(v, g, 2)
    assert (fa, ra, sa, sra) == (1.0, 0.0, 1.0, 0.0)


def test_topk_k_out_of_range():
    v = np.array([1.0, 2.0])
    with pytest.raises(ValueError):
        topk_agreement(v, v, 0)
    with pytest.raises(ValueError):
        topk_agreement(v, v, 3)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_topk_inclusion_chain(data):
    d = data.draw(st.integers(2, 12))
    k = data.draw(st.integers(1, d))
    finite = st.floats(-10, 10, allow_nan=False)
    v = np.array(data.draw(st.lists(finite, min_size=d, max_size=d)))
    g = np.array(data.draw(st.lists(finite, min_size=d, max_size=d)))
    fa, ra, sa, sra = topk_agreement(v, g, k)
    assert sra <= ra + 1e-12 and sra <= sa + 1e-12 and ra <= fa + 1e-12


def test_topk_invariant_to_shared_monotone_transform():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(9)
    g = rng.standard_normal(9)
    base = topk_agreement(v, g, 4)
    # strictly increasing odd transform preserves order and signs
    assert topk_agreement(np.sinh(v), np.sinh(g), 4) == base


def test_rank_metrics_identical_and_reversed():
    v = np.array([0.1, 0.5, 0.9, 1.5])
    assert rank_metrics(v, v) == (1.0, 1.0)
    rc, pra = rank_metrics(v, -v)
    assert rc == -1.0 and pra == 0.0


def test_rank_metrics_hand_computed():
    rc, pra = rank_metrics(np.array([1.0, 2.0, 3.0]), np.array([1.0, 3.0, 2.0]))
    assert abs(rc - 0.5) < 1e-12
    assert abs(pra - 2 / 3) < 1e-12


def test_rank_metrics_tie_handling():
    v = np.array([1.0, 1.0, 2.0])
    g = np.array([1.0, 1.0, 2.0])
    rc, pra = rank_metrics(v, g)
    assert rc == 1.0 and pra == 1.0
    g2 = np.array([1.0, 1.5, 2.0])  # tie on one side only
    _, pra2 = rank_metrics(v, g2)
    assert pra2 == 2 / 3


def test_rank_metrics_invariant_to_one_sided_monotone_transform():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(10)
    g = rng.standard_normal(10)
    base = rank_metrics(v, g)
    transformed = rank_metrics(np.exp(v), g)
    assert np.allclose(base, transformed)


def test_agreement_scores_averages_over_samples():
    v = np.array([[3.0, 2.0, 1.0, 0.0], [3.0, 2.0, 1.0, 0.0]])
    g = np.array([[3.0, 2.0, 1.0, 0.0], [0.0, 1.0, 2.0, 3.0]])
    scores = agreement_scores(Attribution(v, "a"), Attribution(g, "b"), k=2)
    assert scores.fa == 0.5 and scores.ra == 0.5
    assert scores.rc == 0.0  # mean of +1 and -1
    assert scores.per_sample["FA"].shape == (2,)


def test_drop_score_trivial_shapes():
    flat = curve("goar", [0, 1, 2], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    assert performance_drop_score(flat) == 0.0
    const = curve("goar", [0, 1], [0.0, 0.0], [1.0, 1.0])
    assert performance_drop_score(const) == 1.0
    ramp = curve("goar", [0, 1], [1.0, 0.0], [0.0, 1.0])
    assert performance_drop_score(ramp) == 0.5


def test_drop_score_pixel_uses_accuracy_drop():
    c = curve("roar", [0, 0.5, 1.0], [0.9, 0.6, 0.4], [0.1, 0.4, 0.6])
    # drop series (0, 0.3, 0.5): trapezoid = (0.15 + 0.4)/2 ... over span 1
    want = np.trapezoid([0.0, 0.3, 0.5], [0, 0.5, 1.0])
    assert abs(performance_drop_score(c) - want) < 1e-12


def test_curve_validation():
    with pytest.raises(ValueError):
        curve("goar", [0.5, 1.0], [1.0, 0.9], [0.0, 0.1])  # no clean baseline
    with pytest.raises(ValueError):
        curve("goar", [0, 1], [1.0, 0.9], [0.2, 0.1])  # cumulative decreases


def scores_with(fa):
    return AgreementScores(fa, fa, fa, fa, fa, fa, k=2)


def test_correlation_perfect_and_anti():
    agreements = {"a": scores_with(0.1), "b": scores_with(0.5),
                  "c": scores_with(0.9)}
    drops = {"bench": {"a": 0.2, "b": 1.0, "c": 1.8}}
    table = correlation_table(drops, agreements, n_bootstrap=50, seed=0)
    assert abs(table.r[("bench", "FA")] - 1.0) < 1e-12
    anti = {"bench": {"a": 1.8, "b": 1.0, "c": 0.2}}
    table = correlation_table(anti, agreements, n_bootstrap=50, seed=0)
    assert abs(table.r[("bench", "FA")] + 1.0) < 1e-12


def test_correlation_hand_computed():
    agreements = {"a": scores_with(1.0), "b": scores_with(3.0),
                  "c": scores_with(2.0)}
    drops = {"bench": {"a": 1.0, "b": 2.0, "c": 3.0}}
    table = correlation_table(drops, agreements, n_bootstrap=10, seed=0)
    assert abs(table.r[("bench", "FA")] - 0.5) < 1e-12


def test_correlation_affine_invariance_and_nan():
    agreements = {m: scores_with(x) for m, x in
                  [("a", 0.3), ("b", 0.6), ("c", 0.1), ("d", 0.8)]}
    drops = {"bench": {"a": 0.1, "b": 0.9, "c": 0.05, "d": 1.4}}
    t1 = correlation_table(drops, agreements, n_bootstrap=10, seed=0)
    scaled = {"bench": {m: 7.0 * v - 3.0 for m, v in drops["bench"].items()}}
    t2 = correlation_table(scaled, agreements, n_bootstrap=10, seed=0)
    assert abs(t1.r[("bench", "FA")] - t2.r[("bench", "FA")]) < 1e-12
    flat = {"bench": {m: 1.0 for m in drops["bench"]}}
    t3 = correlation_table(flat, agreements, n_bootstrap=10, seed=0)
    assert np.isnan(t3.r[("bench", "FA")])


def test_correlation_requires_three_methods():
    agreements = {"a": scores_with(0.1), "b": scores_with(0.2)}
    with pytest.raises(ValueError):
        correlation_table({"bench": {"a": 1.0, "b": 2.0}}, agreements)


def test_correlation_sample_axis_bootstrap():
    rng = np.random.default_rng(0)
    agreements = {}
    for m, level in [("a", 0.2), ("b", 0.5), ("c", 0.8)]:
        per = {name: np.clip(level + 0.1 * rng.standard_normal(40), 0, 1)
               for name in ("FA", "RA", "SA", "SRA", "RC", "PRA")}
        means = {k: float(v.mean()) for k, v in per.items()}
        agreements[m] = AgreementScores(means["FA"], means["RA"], means["SA"],
                                        means["SRA"], means["RC"], means["PRA"],
                                        k=2, per_sample=per)
    drops = {"bench": {"a": 0.1, "b": 0.5, "c": 0.9}}
    table = correlation_table(drops, agreements, n_bootstrap=100, seed=1,
                              axis="samples")
    assert table.r[("bench", "FA")] > 0.9
    assert np.isfinite(table.std[("bench", "FA")])
