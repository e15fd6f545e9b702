"""CSV/JSON report writers and a dependency-free SVG line plot."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

FOLD_COLUMNS = (
    "fold", "held_out", "condition", "macro_f1", "per_class_f1", "support",
    "n_train_real", "n_train_synthetic", "n_test",
)  # fmt: skip


def write_fold_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FOLD_COLUMNS)
        for r in reports:
            row = r.row() if hasattr(r, "row") else dict(r)
            vals = []
            for c in FOLD_COLUMNS:
                v = row[c]
                if isinstance(v, (list, tuple)):
                    v = ";".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
                elif isinstance(v, float):
                    v = repr(v)
                vals.append(v)
            w.writerow(vals)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_curve_csv(curves: dict, path) -> None:
    """Columns frame, then one column per named curve."""
    names = list(curves)
    n = max(len(curves[k]) for k in names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", *names])
        for t in range(n):
            w.writerow([t, *(repr(float(curves[k][t])) if t < len(curves[k]) else "" for k in names)])


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def line_plot_svg(curves: dict, title: str = "", xlabel: str = "frame", ylabel: str = "", size=(640, 400)) -> str:
    """Polyline plot of named 1-D curves with axes, tick labels and a legend."""
    width, height = size
    left, right, top, bottom = 60, 150, 30, 45
    pw, ph = width - left - right, height - top - bottom
    ys = np.concatenate([np.asarray(v, dtype=float) for v in curves.values()]) if curves else np.zeros(1)
    ys = ys[np.isfinite(ys)]
    lo, hi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    n = max((len(v) for v in curves.values()), default=2)
    xmax = max(n - 1, 1)

    def sx(t):
        return left + pw * t / xmax

    def sy(v):
        return top + ph * (1 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="18" font-size="14" font-family="sans-serif">{escape(title)}</text>')
    for i in range(5):
        v = lo + (hi - lo) * i / 4
        out.append(
            f'<text x="{left - 6}" y="{sy(v) + 4:.1f}" font-size="10" text-anchor="end" '
            f'font-family="sans-serif">{v:.3g}</text>'
        )
        t = xmax * i / 4
        out.append(
            f'<text x="{sx(t):.1f}" y="{top + ph + 14}" font-size="10" text-anchor="middle" '
            f'font-family="sans-serif">{t:.0f}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2}" y="{height - 8}" font-size="11" text-anchor="middle" '
        f'font-family="sans-serif">{escape(xlabel)}</text>'
    )
    if ylabel:
        out.append(
            f'<text x="14" y="{top + ph / 2}" font-size="11" text-anchor="middle" font-family="sans-serif" '
            f'transform="rotate(-90 14 {top + ph / 2})">{escape(ylabel)}</text>'
        )
    for k, (name, vals) in enumerate(curves.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in enumerate(np.asarray(vals, float)) if np.isfinite(v))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 * k + 6
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}" font-size="10" font-family="sans-serif">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_plot(curves: dict, path, **kw) -> None:
    Path(path).write_text(line_plot_svg(curves, **kw), encoding="utf-8")
