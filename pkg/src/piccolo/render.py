"""Minimal SVG line charts: per-group median polyline with a 25-75% band."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError

WIDTH, HEIGHT, PAD = 640, 400, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _read(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            return reader.fieldnames or [], rows
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _float(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return np.nan


def series(path, col: str, x: str | None = None, group: str | None = None) -> dict:
    """{group label: (xs, median, q25, q75)} aggregated over seeds."""
    header, rows = _read(path)
    if col not in header:
        raise ConfigError(f"column {col!r} not in {path}; available: {', '.join(header)}")
    if x is None:
        x = "n" if "n" in header else "N"
    if x not in header:
        raise ConfigError(f"x column {x!r} not in {path}")
    if group is None:
        group = "meta.mode" if "meta.mode" in header else None
    if group is not None and group not in header:
        raise ConfigError(f"group column {group!r} not in {path}")
    buckets: dict = {}
    for r in rows:
        label = r[group] if group else col
        buckets.setdefault(label, {}).setdefault(_float(r[x]), []).append(_float(r[col]))
    out = {}
    for label, by_x in buckets.items():
        xs = np.array(sorted(by_x))
        vals = [np.array(by_x[v]) for v in xs]
        vals = [v[np.isfinite(v)] for v in vals]
        keep = np.array([v.size > 0 for v in vals])
        if not keep.any():
            continue
        vals = [v for v, k in zip(vals, keep) if k]
        out[label] = (xs[keep], np.array([np.median(v) for v in vals]),
                      np.array([np.percentile(v, 25) for v in vals]),
                      np.array([np.percentile(v, 75) for v in vals]))
    return out


def to_svg(data: dict, col: str, xlabel: str = "n") -> str:
    allx = np.concatenate([d[0] for d in data.values()]) if data else np.array([0.0, 1.0])
    ally = np.concatenate([np.concatenate([d[2], d[3]]) for d in data.values()]) if data else np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(y):
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
             f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
             f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="12" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 12 {HEIGHT / 2})" '
             f'text-anchor="middle">{col}</text>',
             f'<text x="{PAD}" y="{HEIGHT - PAD + 15}" font-size="10">{x0:.4g}</text>',
             f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 15}" font-size="10" text-anchor="end">{x1:.4g}</text>',
             f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" font-size="10" text-anchor="end">{y0:.4g}</text>',
             f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>']
    for i, (label, (xs, med, lo, hi)) in enumerate(sorted(data.items())):
        color = COLORS[i % len(COLORS)]
        band = [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, hi)]
        band += [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[::-1], lo[::-1])]
        parts.append(f'<polygon class="band" points="{" ".join(band)}" fill="{color}" fill-opacity="0.2" '
                     f'stroke="none"/>')
        line = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, med))
        parts.append(f'<polyline class="median" points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{WIDTH - PAD}" y="{PAD + 14 * (i + 1)}" font-size="11" fill="{color}" '
                     f'text-anchor="end">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render(csv_path, col: str, out_svg, x: str | None = None, group: str | None = None) -> None:
    data = series(csv_path, col, x, group)
    Path(out_svg).write_text(to_svg(data, col, x or "n"))
