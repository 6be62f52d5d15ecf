"""Command-line entry point.

Subcommands: `run <config>` executes a config file; `pitfall`, `blend`, and
`openxai` run the named experiments with defaults; `plot` renders a curves.csv
as SVG. Exit codes: 0 success, 1 configuration error, 2 runtime error.
The GOARBENCH_WORKERS environment variable sets the worker-pool size.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, parse_config
from .experiments import run_experiment
from .reporting import emit_svg_plot, read_curves_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="goarbench",
        description="Perturb-retrain benchmarks for feature attribution "
                    "(pixel masking baselines and geometric feature "
                    "perturbation with manifold projection)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config file")
    p_run.add_argument("config", help="path to the experiment config")

    p_pit = sub.add_parser("pitfall", help="masking-pitfall demonstrations")
    p_pit.add_argument("--dx", default="1,2,0.01",
                       help="comma-separated class-separation vector")
    p_pit.add_argument("--cluster-std", type=float, default=0.05)
    p_pit.add_argument("--samples-per-class", type=int, default=200)
    p_pit.add_argument("--seed", type=int, default=0)
    p_pit.add_argument("--out", required=True, help="output directory")

    p_blend = sub.add_parser("blend", help="noise-blend feature study")
    p_blend.add_argument("--lambdas", default="0,0.25,0.5,0.75,1.0")
    p_blend.add_argument("--dim", type=int, default=64)
    p_blend.add_argument("--samples-per-class", type=int, default=500)
    p_blend.add_argument("--seed", type=int, default=0)
    p_blend.add_argument("--out", required=True)

    p_ox = sub.add_parser("openxai",
                          help="ground-truth agreement correlation study")
    p_ox.add_argument("--dim", type=int, default=20)
    p_ox.add_argument("--samples-per-class", type=int, default=500)
    p_ox.add_argument("--ground-truth", default="coefficients_x_input",
                      choices=("coefficients", "coefficients_x_input"))
    p_ox.add_argument("--seed", type=int, default=0)
    p_ox.add_argument("--out", required=True)

    p_plot = sub.add_parser("plot", help="render a curves.csv as SVG")
    p_plot.add_argument("curves", help="path to a curves.csv file")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.add_argument("--value", default="auto",
                        choices=("auto", "accuracy", "cumulative"))
    return parser


def _config_text_pitfall(args):
    return "\n".join([
        "experiment = pitfall",
        f"seed = {args.seed}",
        f"output_dir = {args.out}",
        "[dataset]",
        "kind = pitfall",
        f"dx = {args.dx}",
        f"cluster_std = {args.cluster_std}",
        f"samples_per_class = {args.samples_per_class}",
    ])


def _config_text_blend(args):
    return "\n".join([
        "experiment = blend_study",
        f"seed = {args.seed}",
        f"output_dir = {args.out}",
        "[dataset]",
        "kind = gmm",
        f"dim = {args.dim}",
        f"samples_per_class = {args.samples_per_class}",
        "[blend]",
        f"lambdas = {args.lambdas}",
    ])


def _config_text_openxai(args):
    return "\n".join([
        "experiment = openxai_corr",
        f"seed = {args.seed}",
        f"output_dir = {args.out}",
        "[dataset]",
        "kind = gmm",
        f"dim = {args.dim}",
        f"samples_per_class = {args.samples_per_class}",
        "mean_scale = 1.5",
        "profile = linear",
        "[agreement]",
        f"ground_truth = {args.ground_truth}",
    ])


def _plot(args):
    groups = read_curves_csv(args.curves)
    if not groups:
        raise ValueError(f"{args.curves}: no curves found")
    series = []
    for (strategy, method) in sorted(groups):
        points = sorted(groups[(strategy, method)])
        xs = [p[0] for p in points]
        if args.value == "cumulative" or (args.value == "auto"
                                          and strategy == "goar"):
            ys = [p[2] for p in points]
        else:
            ys = [p[1] for p in points]
        series.append((f"{strategy}/{method}", xs, ys))
    emit_svg_plot(series, args.out, x_label="level",
                  y_label="cumulative misclassified"
                  if args.value == "cumulative" else "accuracy")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
        elif args.command == "pitfall":
            cfg = load_config(_config_text_pitfall(args))
        elif args.command == "blend":
            cfg = load_config(_config_text_blend(args))
        elif args.command == "openxai":
            cfg = load_config(_config_text_openxai(args))
        elif args.command == "plot":
            _plot(args)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        run_experiment(cfg)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("partial outputs (if any) are in the output directory; "
              "no manifest was finalized for this run", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
