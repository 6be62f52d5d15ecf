import numpy as np
import pytest

from goarbench.attribution import Attribution, attr_random
from goarbench.datasets import (Dataset, PitfallSpec, make_gmm, make_pitfall,
                                symmetric_gmm_spec)
from goarbench.models import TrainConfig, accuracy, fit_mlp
from goarbench.pixel import (evalx_train_proxy, road_impute, roar_impute,
                             run_pixel_strategy, top_k_mask)


def test_top_k_mask_examples():
    v = np.array([1.0, 2.0, 0.0])
    assert top_k_mask(v, 1 / 3).tolist() == [0, 1, 0]
    assert top_k_mask(v, 2 / 3).tolist() == [1, 1, 0]
    assert top_k_mask(v, 1.0).tolist() == [1, 1, 1]


def test_top_k_mask_tie_breaks_to_lowest_index():
    v = np.array([5.0, 5.0, 5.0])
    assert top_k_mask(v, 1 / 3).tolist() == [1, 0, 0]
    assert top_k_mask(v, 2 / 3).tolist() == [1, 1, 0]


def test_top_k_mask_magnitude_flag():
    v = np.array([-9.0, 1.0, 2.0])
    assert top_k_mask(v, 1 / 3).tolist() == [0, 0, 1]
    assert top_k_mask(v, 1 / 3, by_magnitude=True).tolist() == [1, 0, 0]


def test_top_k_mask_bad_fraction():
    with pytest.raises(ValueError):
        top_k_mask(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(ValueError):
        top_k_mask(np.array([1.0, 2.0]), 1.1)


def test_roar_impute():
    x = np.array([3.0, 4.0, 5.0])
    assert roar_impute(x, np.array([0, 0, 0])).tolist() == [3.0, 4.0, 5.0]
    assert roar_impute(x, np.array([1, 1, 1])).tolist() == [0.0, 0.0, 0.0]
    assert roar_impute(x, np.array([0, 1, 0])).tolist() == [3.0, 0.0, 5.0]


def test_roar_impute_idempotent():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10)
    mask = (rng.random(10) < 0.4).astype(int)
    once = roar_impute(x, mask)
    assert np.array_equal(roar_impute(once, mask), once)


def test_road_impute_single_gap_is_neighbor_mean():
    x = np.array([0.0, 99.0, 2.0])
    out = road_impute(x, np.array([0, 1, 0]), (1, 3), noise_std=0.0)
    assert out.tolist() == [0.0, 1.0, 2.0]


def test_road_impute_empty_mask_and_fallback():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(road_impute(x, np.zeros(4), (2, 2)), x)
    out = road_impute(x, np.ones(4), (2, 2), noise_std=0.0)
    assert np.allclose(out, 2.5)


def test_road_impute_masked_cells_satisfy_laplace_equation():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(30)
    mask = (rng.random(30) < 0.35).astype(int)
    out = road_impute(x, mask, (5, 6), noise_std=0.0)
    grid = out.reshape(5, 6)
    m = mask.reshape(5, 6)
    for r in range(5):
        for c in range(6):
            if not m[r, c]:
                assert grid[r, c] == x.reshape(5, 6)[r, c]
                continue
            nbrs = [grid[rr, cc] for rr, cc in
                    ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1))
                    if 0 <= rr < 5 and 0 <= cc < 6]
            assert abs(grid[r, c] - np.mean(nbrs)) < 1e-8


def test_road_impute_noise_seeded():
    x = np.zeros(9)
    mask = np.array([0, 1, 0, 1, 1, 1, 0, 1, 0])
    a = road_impute(x, mask, (3, 3), 0.5, np.random.default_rng(7))
    b = road_impute(x, mask, (3, 3), 0.5, np.random.default_rng(7))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, np.zeros(9))


def test_road_impute_shape_mismatch():
    with pytest.raises(ValueError):
        road_impute(np.zeros(5), np.zeros(5), (2, 2))


def test_evalx_mask_prob_zero_is_ordinary_training():
    spec = symmetric_gmm_spec(dim=6, samples_per_class=40)
    ds = make_gmm(spec, seed=0)
    cfg = TrainConfig(seed=3, batch_size=32, max_epochs=15)
    proxy = evalx_train_proxy(ds, cfg, mask_prob=0.0, hidden=(16,))
    plain = fit_mlp(ds, cfg, hidden=(16,))
    for Wp, Wt in zip(proxy.weights, plain.weights):
        assert np.array_equal(Wp, Wt)


def test_evalx_proxy_survives_masking_training():
    spec = symmetric_gmm_spec(dim=64, cov_scale=0.3, samples_per_class=200)
    ds = make_gmm(spec, seed=0)
    holdout = make_gmm(spec, seed=50)
    proxy = evalx_train_proxy(ds, TrainConfig(seed=0, max_epochs=60))
    assert accuracy(proxy, holdout) >= 0.95


def constant_attribution(ds, vector, tag):
    return Attribution(np.tile(np.asarray(vector, dtype=float), (ds.n, 1)), tag)


def test_pixel_strategy_flat_on_pure_noise():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 8))
    y = rng.integers(0, 2, 300)
    ds = Dataset(X, y, 2)
    attr = attr_random(ds, seed=1)
    cfg = TrainConfig(seed=0, batch_size=64, max_epochs=15)
    curve = run_pixel_strategy("roar", ds, attr, [0.25, 0.5], cfg,
                               hidden=(16,))
    assert all(abs(a - 0.5) <= 0.15 for a in curve.accuracy)


def test_pixel_strategy_pitfall_indistinguishable_features():
    spec = PitfallSpec(dx=np.array([1.0, 2.0, 0.01]), eps=0.01,
                       cluster_std=0.05, samples_per_class=200)
    ds = make_pitfall(spec, seed=0)
    cfg = TrainConfig(seed=0, batch_size=64, max_epochs=40)
    e = constant_attribution(ds, [1.0, 2.0, 0.0], "e")
    e_swapped = constant_attribution(ds, [2.0, 1.0, 0.0], "e_swapped")
    ks = [1 / 3, 2 / 3, 1.0]
    c1 = run_pixel_strategy("roar", ds, e, ks, cfg)
    c2 = run_pixel_strategy("roar", ds, e_swapped, ks, cfg)
    # high while any separating coordinate survives, chance once both removed
    assert c1.accuracy[0] > 0.95 and c1.accuracy[1] > 0.95
    assert c1.accuracy[2] < 0.65 and c1.accuracy[3] < 0.65
    # the two rankings are indistinguishable to the benchmark
    for a, b in zip(c1.accuracy, c2.accuracy):
        assert abs(a - b) <= 0.02
    # identical mask sets from k=2/3 on: bitwise-equal retrains
    assert c1.accuracy[2] == c2.accuracy[2]
    assert c1.accuracy[3] == c2.accuracy[3]


def test_pixel_strategy_road_runs_and_matches_shape():
    spec = PitfallSpec(dx=np.array([1.0, 2.0, 0.01]), eps=0.01,
                       cluster_std=0.05, samples_per_class=100)
    ds = make_pitfall(spec, seed=0)
    cfg = TrainConfig(seed=0, batch_size=64, max_epochs=20)
    attr = constant_attribution(ds, [1.0, 2.0, 0.0], "e")
    curve = run_pixel_strategy("road", ds, attr, [1 / 3, 2 / 3], cfg)
    assert curve.levels == (0.0, 1 / 3, 2 / 3)
    assert len(curve.accuracy) == 3
    assert curve.strategy == "road"


def test_pixel_strategy_evalx_reuses_proxy():
    spec = symmetric_gmm_spec(dim=16, cov_scale=0.3, samples_per_class=150)
    ds = make_gmm(spec, seed=0)
    cfg = TrainConfig(seed=0, batch_size=64, max_epochs=40)
    attr = attr_random(ds, seed=2)
    curve = run_pixel_strategy("evalx", ds, attr, [0.25, 0.5], cfg,
                               hidden=(32, 32))
    assert curve.accuracy[0] > 0.9  # clean baseline through the proxy
    assert len(curve.levels) == 3


def test_pixel_strategy_validates_inputs():
    ds = make_gmm(symmetric_gmm_spec(dim=4, samples_per_class=10), seed=0)
    attr = attr_random(ds, seed=0)
    cfg = TrainConfig(seed=0)
    with pytest.raises(ValueError):
        run_pixel_strategy("nope", ds, attr, [0.5], cfg)
    with pytest.raises(ValueError):
        run_pixel_strategy("roar", ds, attr, [0.5, 0.25], cfg)
    with pytest.raises(ValueError):
        run_pixel_strategy("road", ds, attr, [0.5], cfg, grid_shape=(3, 3))


def test_pixel_strategy_deterministic():
    spec = symmetric_gmm_spec(dim=6, samples_per_class=50)
    ds = make_gmm(spec, seed=0)
    cfg = TrainConfig(seed=1, batch_size=32, max_epochs=10)
    attr = attr_random(ds, seed=3)
    a = run_pixel_strategy("roar", ds, attr, [0.5], cfg, hidden=(12,))
    b = run_pixel_strategy("roar", ds, attr, [0.5], cfg, hidden=(12,))
    assert a.accuracy == b.accuracy and a.cumulative == b.cumulative
