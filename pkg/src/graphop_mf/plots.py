"""Deterministic, dependency-free SVG line plots on a log-scaled y axis."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from xml.sax.saxutils import escape

log = logging.getLogger(__name__)

WIDTH, HEIGHT = 560, 380
MARGIN = dict(left=70, right=150, top=40, bottom=50)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
FLOOR = 1e-16


def _fmt(v):
    return f"{v:.6g}"


def line_plot_svg(series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """``series`` maps a label to a list of (x, y) points; y is drawn on a log10 scale."""
    title, xlabel, ylabel = escape(title), escape(xlabel), escape(ylabel)
    pts = [(x, max(y, FLOOR)) for s in series.values() for x, y in s]
    if not pts:
        raise ValueError("nothing to plot")
    xs = [p[0] for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (y1 - math.log10(max(y, FLOOR))) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        "<!-- data",
    ]
    for label, s in series.items():
        out.append(f"  {escape(label).replace('--', '- -')}: " + "; ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in s))
    out.append("-->")
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>')
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               'fill="none" stroke="black"/>')
    for e in range(y0, y1 + 1):
        y = MARGIN["top"] + (y1 - e) / (y1 - y0) * ph
        out.append(f'<line x1="{MARGIN["left"]}" y1="{y:.1f}" x2="{MARGIN["left"] + pw}" y2="{y:.1f}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    ticks = sorted(set(xs))
    for x in ticks:
        out.append(f'<text x="{sx(x):.1f}" y="{MARGIN["top"] + ph + 16}" text-anchor="middle">{_fmt(x)}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{ylabel}</text>')
    for k, (label, s) in enumerate(series.items()):
        col = COLORS[k % len(COLORS)]
        s = sorted(s)
        if len(s) > 1:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
            out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for x, y in s:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{col}"/>')
        ly_ = MARGIN["top"] + 14 * k + 8
        lx = MARGIN["left"] + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly_}" x2="{lx + 16}" y2="{ly_}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 20}" y="{ly_ + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(path, series, title, xlabel, ylabel):
    Path(path).write_text(line_plot_svg(series, title, xlabel, ylabel))
    return Path(path)
