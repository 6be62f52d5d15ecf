"""Plain-text experiment configuration.

Format: `key = value` pairs, `[section]` / `[section.subsection]` headers,
`#` comments. Unknown keys and sections are fatal errors that name their
line, as are missing required fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import GmmSpec, PitfallSpec, symmetric_gmm_spec
from .diffusion import ProjectionConfig
from .models import TrainConfig

EXPERIMENT_KINDS = ("pitfall", "blend_study", "openxai_corr", "custom_curve")
METHOD_NAMES = ("grad", "grad_x_input", "smoothgrad", "integrated_gradients",
                "random")
STRATEGY_NAMES = ("roar", "evalx", "road", "goar")


class ConfigError(Exception):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _parse_lines(text):
    top: dict = {}
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            name = line[1:-1].strip()
            if not name:
                raise ConfigError("empty section name", lineno)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno)
            sections[name] = {"__line__": lineno}
            current = name
        elif "=" in line:
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not key:
                raise ConfigError("missing key before '='", lineno)
            target = top if current is None else sections[current]
            if key in target:
                raise ConfigError(f"duplicate key {key!r}", lineno)
            target[key] = (value, lineno)
        else:
            raise ConfigError(f"expected 'key = value' or '[section]', "
                              f"got {line!r}", lineno)
    return top, sections


class _Reader:
    """Pops typed values from one parsed section; leftovers are fatal."""

    def __init__(self, name, entries):
        self.name = name
        self.line = entries.get("__line__")
        self.entries = {k: v for k, v in entries.items() if k != "__line__"}

    def _pop(self, key, required, default):
        if key in self.entries:
            return self.entries.pop(key)
        if required:
            where = f" in [{self.name}]" if self.name else ""
            raise ConfigError(f"missing required key {key!r}{where}", self.line)
        return (None, None)

    def _convert(self, key, raw, line, conv, kind):
        try:
            return conv(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key!r}: expected {kind}, got {raw!r}",
                              line) from None

    def str(self, key, required=False, default=None, choices=None):
        raw, line = self._pop(key, required, default)
        if raw is None:
            return default
        if choices and raw not in choices:
            raise ConfigError(f"{key!r}: must be one of {', '.join(choices)}, "
                              f"got {raw!r}", line)
        return raw

    def int(self, key, required=False, default=None):
        raw, line = self._pop(key, required, default)
        if raw is None:
            return default
        return self._convert(key, raw, line, int, "an integer")

    def float(self, key, required=False, default=None):
        raw, line = self._pop(key, required, default)
        if raw is None:
            return default
        return self._convert(key, raw, line, float, "a number")

    def bool(self, key, default=None):
        raw, line = self._pop(key, False, default)
        if raw is None:
            return default
        if raw not in ("true", "false"):
            raise ConfigError(f"{key!r}: expected true or false, got {raw!r}",
                              line)
        return raw == "true"

    def float_list(self, key, required=False, default=None):
        raw, line = self._pop(key, required, default)
        if raw is None:
            return list(default) if default is not None else None
        return self._convert(key, raw, line,
                             lambda s: [float(x) for x in s.split(",") if x.strip() != ""],
                             "a comma-separated number list")

    def str_list(self, key, required=False, default=None):
        raw, line = self._pop(key, required, default)
        if raw is None:
            return list(default) if default is not None else None
        return [x.strip() for x in raw.split(",") if x.strip()]

    def finish(self):
        if self.entries:
            key, (_, line) = next(iter(self.entries.items()))
            where = f" in [{self.name}]" if self.name else ""
            raise ConfigError(f"unknown key {key!r}{where}", line)


@dataclass(frozen=True)
class CsvSpec:
    path: str
    label_column: str
    feature_columns: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    output_dir: str
    dataset: object                 # GmmSpec | PitfallSpec | CsvSpec
    dataset_kind: str
    methods: tuple                  # ((name, params dict), ...)
    strategies: tuple               # ((name, params dict), ...)
    train: TrainConfig
    projection: ProjectionConfig
    options: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        ds = self.dataset
        if isinstance(ds, GmmSpec):
            dataset = {"kind": "gmm", "means": ds.means.tolist(),
                       "cov_scale": ds.cov_scale,
                       "samples_per_class": ds.samples_per_class,
                       "weights": ds.weights.tolist()}
        elif isinstance(ds, PitfallSpec):
            dataset = {"kind": "pitfall", "dx": ds.dx.tolist(), "eps": ds.eps,
                       "cluster_std": ds.cluster_std,
                       "samples_per_class": ds.samples_per_class}
        else:
            dataset = {"kind": "csv", "path": ds.path,
                       "label_column": ds.label_column,
                       "feature_columns": list(ds.feature_columns)}
        return {
            "experiment": self.kind,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": dataset,
            "methods": [{"name": n, **p} for n, p in self.methods],
            "strategies": [{"name": n, **p} for n, p in self.strategies],
            "train": {"learning_rate": self.train.learning_rate,
                      "batch_size": self.train.batch_size,
                      "max_epochs": self.train.max_epochs,
                      "early_stop_patience": self.train.early_stop_patience,
                      "optimizer": self.train.optimizer,
                      "seed": self.train.seed},
            "projection": {"extra_noise_fraction": self.projection.extra_noise_fraction,
                           "inference_steps": self.projection.inference_steps,
                           "seed": self.projection.seed,
                           "canonical_std": self.projection.canonical_std},
            "options": dict(self.options),
        }


def _dataset_from(sections, seed, default=None):
    if "dataset" not in sections:
        if default is not None:
            return default
        raise ConfigError("missing required section [dataset]")
    r = _Reader("dataset", sections.pop("dataset"))
    kind = r.str("kind", required=True, choices=("gmm", "pitfall", "csv"))
    if kind == "gmm":
        dim = r.int("dim", required=True)
        spec = symmetric_gmm_spec(
            dim,
            cov_scale=r.float("cov_scale", default=0.3),
            samples_per_class=r.int("samples_per_class", default=500),
            mean_scale=r.float("mean_scale", default=1.0),
            profile=r.str("profile", default="constant",
                          choices=("constant", "linear")))
    elif kind == "pitfall":
        dx = r.float_list("dx", required=True)
        spec = PitfallSpec(np.asarray(dx),
                           eps=r.float("eps", default=min(abs(v) for v in dx
                                                          if v != 0)),
                           cluster_std=r.float("cluster_std", default=0.05),
                           samples_per_class=r.int("samples_per_class",
                                                   default=200))
    else:
        spec = CsvSpec(r.str("path", required=True),
                       r.str("label_column", required=True),
                       tuple(r.str_list("feature_columns", required=True)))
    r.finish()
    return (spec, kind)


def _methods_from(sections, default):
    found = []
    for name in list(sections):
        if not name.startswith("methods."):
            continue
        method = name.split(".", 1)[1]
        r = _Reader(name, sections.pop(name))
        if method not in METHOD_NAMES:
            raise ConfigError(f"unknown method {method!r}", r.line)
        params = {}
        if method == "smoothgrad":
            params = {"n_samples": r.int("n_samples", default=16),
                      "noise_std": r.float("noise_std", default=0.3),
                      "seed": r.int("seed", default=0)}
        elif method == "integrated_gradients":
            params = {"n_steps": r.int("n_steps", default=64)}
        elif method == "random":
            params = {"seed": r.int("seed", default=1)}
        r.finish()
        found.append((method, params))
    return tuple(found) if found else default


def _strategies_from(sections, default):
    found = []
    for name in list(sections):
        if not name.startswith("strategies."):
            continue
        strategy = name.split(".", 1)[1]
        r = _Reader(name, sections.pop(name))
        if strategy not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {strategy!r}", r.line)
        if strategy == "goar":
            params = {"multipliers": r.float_list(
                "multipliers",
                default=[0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.5, 4.0]),
                "project": r.bool("project", default=True)}
        else:
            params = {"fractions": r.float_list("fractions",
                                                default=[0.25, 0.5, 0.75])}
            if strategy == "road":
                params["noise_std"] = r.float("noise_std", default=0.01)
                params["grid_height"] = r.int("grid_height", default=1)
        r.finish()
        found.append((strategy, params))
    return tuple(found) if found else default


def _train_from(sections, seed, default_batch=256):
    if "train" not in sections:
        return TrainConfig(seed=seed, batch_size=default_batch)
    r = _Reader("train", sections.pop("train"))
    cfg = TrainConfig(
        learning_rate=r.float("learning_rate", default=3e-4),
        batch_size=r.int("batch_size", default=default_batch),
        max_epochs=r.int("max_epochs", default=100),
        early_stop_patience=r.int("early_stop_patience", default=5),
        optimizer=r.str("optimizer", default="adam", choices=("adam", "sgd")),
        seed=r.int("seed", default=seed))
    r.finish()
    return cfg


def _projection_from(sections, seed):
    if "projection" not in sections:
        return ProjectionConfig(seed=seed)
    r = _Reader("projection", sections.pop("projection"))
    cfg = ProjectionConfig(
        extra_noise_fraction=r.float("extra_noise_fraction", default=0.16),
        inference_steps=r.int("inference_steps", default=25),
        seed=r.int("seed", default=seed),
        canonical_std=r.float("canonical_std", default=None))
    r.finish()
    return cfg


DEFAULT_METHODS = (("grad", {}), ("grad_x_input", {}),
                   ("smoothgrad", {"n_samples": 16, "noise_std": 0.3, "seed": 0}),
                   ("integrated_gradients", {"n_steps": 64}),
                   ("random", {"seed": 1}))


def load_config(text) -> ExperimentConfig:
    top, sections = _parse_lines(text)
    r = _Reader("", dict(top))
    kind = r.str("experiment", required=True, choices=EXPERIMENT_KINDS)
    seed = r.int("seed", required=True)
    output_dir = r.str("output_dir", required=True)
    r.finish()

    options = {}
    if "options" in sections:
        o = _Reader("options", sections.pop("options"))
        options["test_fraction"] = o.float("test_fraction", default=0.2)
        o.finish()
    else:
        options["test_fraction"] = 0.2

    if kind == "pitfall":
        dataset, ds_kind = _dataset_from(sections, seed, default=None)
        if ds_kind != "pitfall":
            raise ConfigError("pitfall experiment requires a pitfall dataset")
        if "pitfall" in sections:
            p = _Reader("pitfall", sections.pop("pitfall"))
            options["rotation_dim"] = p.int("rotation_dim", default=8)
            options["rotation_separation"] = p.float("rotation_separation",
                                                     default=2.0)
            p.finish()
        else:
            options["rotation_dim"] = 8
            options["rotation_separation"] = 2.0
        methods = tuple()
        strategies = (("roar", {"fractions": None}),)
        train = _train_from(sections, seed, default_batch=64)
    elif kind == "blend_study":
        default = (symmetric_gmm_spec(64, 0.3, 500), "gmm")
        dataset, ds_kind = _dataset_from(sections, seed, default=default)
        if "blend" in sections:
            b = _Reader("blend", sections.pop("blend"))
            options["lambdas"] = b.float_list(
                "lambdas", default=[0.0, 0.25, 0.5, 0.75, 1.0])
            options["blend_seeds"] = [int(s) for s in b.float_list(
                "seeds", default=[17, 5, 29])]
            b.finish()
        else:
            options["lambdas"] = [0.0, 0.25, 0.5, 0.75, 1.0]
            options["blend_seeds"] = [17, 5, 29]
        methods = (("grad", {}),)
        strategies = _strategies_from(sections, (
            ("goar", {"multipliers": [0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5,
                                      2.5, 4.0], "project": True}),
            ("roar", {"fractions": [0.25, 0.5, 0.75]})))
        train = _train_from(sections, seed)
    elif kind == "openxai_corr":
        default = (symmetric_gmm_spec(20, 0.3, 500, mean_scale=1.5,
                                      profile="linear"), "gmm")
        dataset, ds_kind = _dataset_from(sections, seed, default=default)
        if "agreement" in sections:
            a = _Reader("agreement", sections.pop("agreement"))
            options["k_fraction"] = a.float("k_fraction", default=0.25)
            options["ground_truth"] = a.str(
                "ground_truth", default="coefficients_x_input",
                choices=("coefficients", "coefficients_x_input"))
            options["n_bootstrap"] = a.int("n_bootstrap", default=1000)
            options["bootstrap_axis"] = a.str("bootstrap_axis",
                                              default="methods",
                                              choices=("methods", "samples"))
            a.finish()
        else:
            options.update(k_fraction=0.25,
                           ground_truth="coefficients_x_input",
                           n_bootstrap=1000, bootstrap_axis="methods")
        methods = _methods_from(sections, DEFAULT_METHODS)
        strategies = _strategies_from(sections, (
            ("roar", {"fractions": [0.25, 0.5, 0.75]}),
            ("evalx", {"fractions": [0.25, 0.5, 0.75]}),
            ("goar", {"multipliers": [0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5,
                                      2.5, 4.0], "project": True})))
        train = _train_from(sections, seed)
    else:  # custom_curve
        dataset, ds_kind = _dataset_from(sections, seed)
        methods = _methods_from(sections, (("grad", {}), ("random", {"seed": 1})))
        strategies = _strategies_from(sections, (
            ("roar", {"fractions": [0.25, 0.5, 0.75]}),))
        train = _train_from(sections, seed)

    projection = _projection_from(sections, seed)
    if sections:
        name = next(iter(sections))
        raise ConfigError(f"unknown section [{name}]",
                          sections[name].get("__line__"))
    return ExperimentConfig(kind, seed, output_dir, dataset, ds_kind,
                            methods, strategies, train, projection, options)


def parse_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())
