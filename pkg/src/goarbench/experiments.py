"""Named experiment drivers: the two masking-pitfall demonstrations, the
noise-blend study, the ground-truth correlation study, and free-form
config-driven curve runs. All outputs land in the config's output directory
as CSV/JSON/SVG; results are byte-reproducible from (config, seeds)."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .attribution import (METHOD_REGISTRY, Attribution, NoiseBlend,
                          blend_with_noise, ground_truth_from_linear)
from .config import CsvSpec, ExperimentConfig
from .datasets import (Dataset, GmmSpec, PitfallSpec, load_csv, make_gmm,
                       make_pitfall, random_rotation, rotate_dataset,
                       split_indices)
from .diffusion import (CanonicalMap, GmmPrior, ProjectionConfig,
                        make_schedule)
from .evaluation import (DegradationCurve, agreement_scores,
                         correlation_table, performance_drop_score, run_goar)
from .models import fit_logistic, fit_mlp
from .pixel import run_pixel_strategy
from .reporting import (curve_family_svg, ensure_dir, write_agreement_csv,
                        write_correlations_csv, write_curves_csv,
                        write_drops_csv, write_manifest)

WORKERS_ENV = "GOARBENCH_WORKERS"


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise RuntimeError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(n, 1)


def _map_jobs(fn, jobs):
    """Evaluate fn over keyed jobs, possibly in a thread pool; result order is
    canonical (the given job order), never completion order."""
    workers = _worker_count()
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def build_dataset(cfg: ExperimentConfig):
    """Dataset plus (for mixture-family data) the generating prior."""
    ds_spec = cfg.dataset
    if isinstance(ds_spec, GmmSpec):
        return make_gmm(ds_spec, cfg.seed), GmmPrior.from_gmm_spec(ds_spec)
    if isinstance(ds_spec, PitfallSpec):
        dataset = make_pitfall(ds_spec, cfg.seed)
        prior = GmmPrior.from_pitfall_spec(ds_spec) if ds_spec.cluster_std > 0 \
            else None
        return dataset, prior
    if isinstance(ds_spec, CsvSpec):
        return load_csv(ds_spec.path, ds_spec.label_column,
                        ds_spec.feature_columns), None
    raise TypeError(f"unsupported dataset spec {type(ds_spec)!r}")


def compute_attribution(name, params, model, dataset) -> Attribution:
    method = METHOD_REGISTRY[name](**params)
    return method.explain(model, dataset)


def strength_unit(dataset: Dataset) -> float:
    """Default geometric strength unit: mean per-coordinate std times sqrt(d)."""
    return float(np.mean(dataset.X.std(axis=0)) * np.sqrt(dataset.dim))


def run_strategy(strategy, params, dataset, attr, cfg, prior, schedule,
                 normalize=True, projection=None) -> DegradationCurve:
    projection = projection if projection is not None else cfg.projection
    test_fraction = cfg.options.get("test_fraction", 0.2)
    if strategy == "goar":
        if prior is None:
            raise ValueError("the geometric strategy needs a mixture-family "
                             "dataset with positive spread (no prior available)")
        unit = strength_unit(dataset)
        strengths = [m * unit for m in params["multipliers"]]
        return run_goar(dataset, attr, strengths, cfg.train, prior, schedule,
                        projection=projection, project=params.get("project", True),
                        normalize=normalize, test_fraction=test_fraction)
    grid_shape = None
    if strategy == "road":
        h = params.get("grid_height", 1)
        if dataset.dim % h:
            raise ValueError(f"grid_height {h} does not divide dim {dataset.dim}")
        grid_shape = (h, dataset.dim // h)
    return run_pixel_strategy(strategy, dataset, attr, params["fractions"],
                              cfg.train, grid_shape=grid_shape,
                              test_fraction=test_fraction,
                              road_noise_std=params.get("noise_std", 0.01))


def _relabel(curve: DegradationCurve, method: str) -> DegradationCurve:
    return DegradationCurve(curve.strategy, method, curve.levels,
                            curve.accuracy, curve.cumulative,
                            seed=curve.seed, meta=curve.meta)


def _mean_curves(curves) -> DegradationCurve:
    ref = curves[0]
    acc = tuple(float(np.mean(col)) for col in zip(*(c.accuracy for c in curves)))
    cum = tuple(float(np.mean(col)) for col in zip(*(c.cumulative for c in curves)))
    return DegradationCurve(ref.strategy, ref.method, ref.levels, acc, cum,
                            seed=ref.seed,
                            meta={**ref.meta, "repeats": len(curves)})


def _strategy_x_label(strategy):
    return "perturbation strength" if strategy == "goar" else "masked fraction"


def _write_curve_reports(curves, out_dir):
    write_curves_csv(curves, os.path.join(out_dir, "curves.csv"))
    for strategy in sorted({c.strategy for c in curves}):
        family = [c for c in curves if c.strategy == strategy]
        curve_family_svg(family, os.path.join(out_dir, f"curves_{strategy}.svg"),
                         x_label=_strategy_x_label(strategy))


def _manifest_extras(cfg, dataset, prior):
    extras = {"dataset_summary": {"n": dataset.n, "dim": dataset.dim,
                                  "n_classes": dataset.n_classes,
                                  "name": dataset.name}}
    if prior is not None:
        cmap = CanonicalMap.fit(dataset.X, target_std=cfg.projection.canonical_std)
        extras["canonical_map"] = cmap.as_dict()
        extras["strength_unit"] = strength_unit(dataset)
    extras["drop_scalarization"] = (
        "normalized trapezoid area: cumulative-misclassification series for "
        "the geometric strategy, clean-baseline accuracy drop for pixel "
        "strategies")
    return extras


def run_custom_curve(cfg: ExperimentConfig, out_dir):
    dataset, prior = build_dataset(cfg)
    schedule = make_schedule(inference_steps=cfg.projection.inference_steps)
    tr_idx, _ = split_indices(dataset.y, cfg.options.get("test_fraction", 0.2),
                              cfg.train.seed)
    base = fit_mlp(dataset.subset(tr_idx), cfg.train)
    attrs = {name: compute_attribution(name, params, base, dataset)
             for name, params in cfg.methods}
    jobs = [(sname, sparams, mname) for sname, sparams in cfg.strategies
            for mname, _ in cfg.methods]

    def one(job):
        sname, sparams, mname = job
        return _relabel(run_strategy(sname, sparams, dataset, attrs[mname],
                                     cfg, prior, schedule), mname)

    curves = _map_jobs(one, jobs)
    drops = {}
    for c in curves:
        drops.setdefault(c.strategy, {})[c.method] = performance_drop_score(c)
    _write_curve_reports(curves, out_dir)
    write_drops_csv(drops, os.path.join(out_dir, "drops.csv"))
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg.as_dict(),
                   extras=_manifest_extras(cfg, dataset, prior))
    return {"curves": curves, "drops": drops}


def run_openxai_corr(cfg: ExperimentConfig, out_dir):
    dataset, prior = build_dataset(cfg)
    schedule = make_schedule(inference_steps=cfg.projection.inference_steps)
    test_fraction = cfg.options.get("test_fraction", 0.2)
    tr_idx, te_idx = split_indices(dataset.y, test_fraction, cfg.train.seed)
    base = fit_mlp(dataset.subset(tr_idx), cfg.train)
    attrs = {name: compute_attribution(name, params, base, dataset)
             for name, params in cfg.methods}

    linear = fit_logistic(dataset.subset(tr_idx), cfg.train)
    gt = ground_truth_from_linear(
        linear, dataset,
        multiply_by_input=cfg.options["ground_truth"] == "coefficients_x_input")
    k = max(1, int(np.floor(cfg.options["k_fraction"] * dataset.dim + 0.5)))
    agreements = {name: agreement_scores(attrs[name].subset(te_idx),
                                         gt.subset(te_idx), k=k)
                  for name, _ in cfg.methods}

    jobs = [(sname, sparams, mname) for sname, sparams in cfg.strategies
            for mname, _ in cfg.methods]

    def one(job):
        sname, sparams, mname = job
        return _relabel(run_strategy(sname, sparams, dataset, attrs[mname],
                                     cfg, prior, schedule), mname)

    curves = _map_jobs(one, jobs)
    drops = {}
    for c in curves:
        drops.setdefault(c.strategy, {})[c.method] = performance_drop_score(c)
    table = correlation_table(drops, agreements,
                              n_bootstrap=cfg.options["n_bootstrap"],
                              seed=cfg.seed,
                              axis=cfg.options["bootstrap_axis"])
    _write_curve_reports(curves, out_dir)
    write_drops_csv(drops, os.path.join(out_dir, "drops.csv"))
    write_agreement_csv(agreements, os.path.join(out_dir, "agreement.csv"))
    write_correlations_csv(table, os.path.join(out_dir, "correlations.csv"))
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg.as_dict(),
                   extras=_manifest_extras(cfg, dataset, prior))
    return {"curves": curves, "drops": drops, "agreements": agreements,
            "correlations": table}


def run_blend_study(cfg: ExperimentConfig, out_dir):
    dataset, prior = build_dataset(cfg)
    if prior is None:
        raise ValueError("the blend study needs a mixture-family dataset")
    schedule = make_schedule(inference_steps=cfg.projection.inference_steps)
    tr_idx, _ = split_indices(dataset.y, cfg.options.get("test_fraction", 0.2),
                              cfg.train.seed)
    base = fit_mlp(dataset.subset(tr_idx), cfg.train)
    grad = compute_attribution("grad", {}, base, dataset)
    lambdas = cfg.options["lambdas"]
    blend_seeds = cfg.options["blend_seeds"]

    jobs = [(sname, sparams, lam, rep, bseed)
            for sname, sparams in cfg.strategies
            for lam in lambdas
            for rep, bseed in enumerate(blend_seeds)]

    def one(job):
        sname, sparams, lam, rep, bseed = job
        blended = blend_with_noise(grad, NoiseBlend(lam, seed=bseed))
        proj = ProjectionConfig(cfg.projection.extra_noise_fraction,
                                cfg.projection.inference_steps,
                                cfg.projection.seed + rep,
                                cfg.projection.canonical_std)
        # blended vectors keep their mixing-level norm: no re-normalization
        return run_strategy(sname, sparams, dataset, blended, cfg, prior,
                            schedule, normalize=False, projection=proj)

    results = _map_jobs(one, jobs)
    by_group: dict = {}
    for job, curve in zip(jobs, results):
        sname, _, lam, _, _ = job
        by_group.setdefault((sname, lam), []).append(curve)
    curves = [_relabel(_mean_curves(group), f"lambda={lam:g}")
              for (sname, lam), group in sorted(by_group.items())]
    drops = {}
    for c in curves:
        drops.setdefault(c.strategy, {})[c.method] = performance_drop_score(c)
    _write_curve_reports(curves, out_dir)
    write_drops_csv(drops, os.path.join(out_dir, "drops.csv"))
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg.as_dict(),
                   extras=_manifest_extras(cfg, dataset, prior))
    return {"curves": curves, "drops": drops}


def _pitfall_features(dx, eps):
    """The paper-style feature pair: the separating direction with sub-eps
    coordinates zeroed, and the same vector with its two largest entries
    swapped."""
    e = np.where(np.abs(dx) > eps, dx, 0.0)
    order = np.argsort(-e, kind="stable")
    e_swapped = e.copy()
    e_swapped[order[0]], e_swapped[order[1]] = e[order[1]], e[order[0]]
    return e, e_swapped


def run_pitfall(cfg: ExperimentConfig, out_dir):
    spec: PitfallSpec = cfg.dataset
    dataset, _ = build_dataset(cfg)
    d = dataset.dim
    fractions = [(i + 1) / d for i in range(d)]
    e, e_swapped = _pitfall_features(spec.dx, spec.eps)

    def constant_attr(ds, vector, tag):
        return Attribution(np.tile(np.asarray(vector, float), (ds.n, 1)), tag)

    jobs = [("feature_e", dataset, constant_attr(dataset, e, "feature_e"),
             fractions),
            ("feature_e_swapped", dataset,
             constant_attr(dataset, e_swapped, "feature_e_swapped"), fractions)]

    # coordinate-dependence part: one geometry, axis-aligned vs rotated
    rdim = cfg.options["rotation_dim"]
    sep = cfg.options["rotation_separation"]
    dx_axis = np.zeros(rdim)
    dx_axis[0] = sep
    axis_spec = PitfallSpec(dx_axis, eps=spec.eps,
                            cluster_std=spec.cluster_std,
                            samples_per_class=spec.samples_per_class)
    axis_ds = make_pitfall(axis_spec, cfg.seed)
    R = random_rotation(rdim, cfg.seed + 1)
    rot_ds = rotate_dataset(axis_ds, R)
    rfracs = [(i + 1) / rdim for i in range(rdim)]
    jobs.append(("axis_aligned", axis_ds,
                 constant_attr(axis_ds, dx_axis, "axis_aligned"), rfracs))
    jobs.append(("rotated", rot_ds,
                 constant_attr(rot_ds, R @ dx_axis, "rotated"), rfracs))

    def one(job):
        tag, ds, attr, fracs = job
        return _relabel(run_pixel_strategy(
            "roar", ds, attr, fracs, cfg.train,
            test_fraction=cfg.options.get("test_fraction", 0.2)), tag)

    curves = _map_jobs(one, jobs)
    _write_curve_reports(curves, out_dir)
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg.as_dict(),
                   extras={"features": {"e": e.tolist(),
                                        "e_swapped": e_swapped.tolist()},
                           "rotation_dim": rdim})
    return {"curves": curves}


def run_experiment(cfg: ExperimentConfig) -> dict:
    out_dir = ensure_dir(cfg.output_dir)
    runner = {"pitfall": run_pitfall, "blend_study": run_blend_study,
              "openxai_corr": run_openxai_corr,
              "custom_curve": run_custom_curve}[cfg.kind]
    return runner(cfg, out_dir)
