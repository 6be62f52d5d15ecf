"""Deterministic report files: CSV tables, run manifests, and standalone SVG
line charts. Numeric cells use the shortest round-trip decimal form."""
from __future__ import annotations

import csv
import json
import math
import os
from datetime import datetime, timezone

from .evaluation import AGREEMENT_METRICS


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def write_curves_csv(curves, path):
    rows = []
    for c in sorted(curves, key=lambda c: (c.strategy, c.method)):
        for level, acc, cum in zip(c.levels, c.accuracy, c.cumulative):
            rows.append((c.strategy, c.method, _fmt(float(level)),
                         _fmt(float(acc)), _fmt(float(cum))))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "method", "level", "accuracy",
                    "cumulative_misclassified"])
        w.writerows(rows)


def read_curves_csv(path):
    """Rows grouped back into (strategy, method) -> list of point tuples."""
    groups: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"strategy", "method", "level", "accuracy",
                    "cumulative_misclassified"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected curve columns {sorted(required)}")
        for row in reader:
            key = (row["strategy"], row["method"])
            groups.setdefault(key, []).append(
                (float(row["level"]), float(row["accuracy"]),
                 float(row["cumulative_misclassified"])))
    return groups


def write_agreement_csv(scores, path):
    """scores: {method: AgreementScores}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", *AGREEMENT_METRICS, "k"])
        for method in sorted(scores):
            s = scores[method]
            w.writerow([method, *(_fmt(v) for v in s.as_tuple()), s.k])


def write_correlations_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["benchmark", "metric", "r", "std"])
        for bench in table.benchmarks:
            for metric in table.metrics:
                w.writerow([bench, metric, _fmt(table.r[(bench, metric)]),
                            _fmt(table.std[(bench, metric)])])


def write_drops_csv(drops, path):
    """drops: {benchmark: {method: scalar}}; scalar = normalized curve area."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["benchmark", "method", "drop_score"])
        for bench in sorted(drops):
            for method in sorted(drops[bench]):
                w.writerow([bench, method, _fmt(drops[bench][method])])


def write_manifest(path, config_dict, extras=None, version="0.1.0"):
    manifest = {
        "tool": "goarbench",
        "version": version,
        "config": config_dict,
        "wall_clock_utc": datetime.now(timezone.utc).isoformat(),
        "environment": {"note": "single-platform floats; rerunning the "
                                "recorded config reproduces every CSV byte "
                                "for byte on the same float implementation"},
    }
    if extras:
        manifest.update(extras)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def emit_svg_plot(series, path, x_label="level", y_label="accuracy",
                  title=""):
    """Standalone SVG line chart.

    series: list of (label, xs, ys) with equal-length coordinate lists.
    Deterministic output bytes: fixed float formatting, series drawn in the
    given order.
    """
    if not series:
        raise ValueError("no curves to plot")
    width, height = 640, 420
    ml, mr, mt, mb = 62, 168, 28, 48
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x0, x1 = min(xs_all), max(xs_all)
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = min(0.0, min(ys_all)), max(1.0, max(ys_all))

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def sy(y):
        return mt + (1.0 - (y - y0) / (y1 - y0)) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{ml}" y="18" font-family="sans-serif" '
                   f'font-size="13" fill="#333">{title}</text>')
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        yy = f"{sy(yv):.2f}"
        out.append(f'<line x1="{ml}" y1="{yy}" x2="{width - mr}" y2="{yy}" '
                   f'stroke="#ddd" stroke-width="1"/>')
        out.append(f'<text x="{ml - 8}" y="{float(yy) + 4:.2f}" '
                   f'font-family="sans-serif" font-size="11" fill="#333" '
                   f'text-anchor="end">{yv:.2f}</text>')
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        xx = f"{sx(xv):.2f}"
        out.append(f'<line x1="{xx}" y1="{height - mb}" x2="{xx}" '
                   f'y2="{height - mb + 5}" stroke="#333" stroke-width="1"/>')
        out.append(f'<text x="{xx}" y="{height - mb + 18}" '
                   f'font-family="sans-serif" font-size="11" fill="#333" '
                   f'text-anchor="middle">{xv:.3g}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{width - ml - mr}" '
               f'height="{height - mt - mb}" fill="none" stroke="#333" '
               f'stroke-width="1"/>')
    out.append(f'<text x="{(ml + width - mr) / 2:.2f}" y="{height - 10}" '
               f'font-family="sans-serif" font-size="12" fill="#333" '
               f'text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="16" y="{(mt + height - mb) / 2:.2f}" '
               f'font-family="sans-serif" font-size="12" fill="#333" '
               f'text-anchor="middle" transform="rotate(-90 16 '
               f'{(mt + height - mb) / 2:.2f})">{y_label}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.8"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{width - mr + 10}" y1="{ly - 4}" '
                   f'x2="{width - mr + 30}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="3"/>')
        out.append(f'<text x="{width - mr + 36}" y="{ly}" '
                   f'font-family="sans-serif" font-size="11" '
                   f'fill="#333">{label}</text>')
    out.append("</svg>")
    data = "\n".join(out) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(data)


def curve_family_svg(curves, path, x_label):
    """One chart per strategy family: geometric strategies plot the cumulative
    series, pixel strategies plot accuracy."""
    strategies = {c.strategy for c in curves}
    if len(strategies) != 1:
        raise ValueError("curve family must share one strategy")
    strategy = strategies.pop()
    use_cumulative = strategy == "goar"
    series = []
    for c in sorted(curves, key=lambda c: c.method):
        ys = list(c.cumulative if use_cumulative else c.accuracy)
        series.append((c.method, list(c.levels), ys))
    emit_svg_plot(series, path, x_label=x_label,
                  y_label="cumulative misclassified" if use_cumulative
                  else "accuracy", title=strategy)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
