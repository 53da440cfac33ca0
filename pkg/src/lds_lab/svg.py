"""Minimal log-scale line charts written as SVG text."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
            "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _log_ticks(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def line_chart(
    series: dict[str, list[tuple[float, float | None]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 640,
    height: int = 420,
) -> str:
    """One polyline per series; y on a log10 axis.

    Non-positive or missing values are drawn at a floor one decade below the
    smallest positive value, so every series keeps its polyline.
    """
    pos = [y for pts in series.values() for _, y in pts if y is not None and y > 0 and math.isfinite(y)]
    floor = (min(pos) / 10) if pos else 1e-16
    xs = [x for pts in series.values() for x, _ in pts]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1
    ly = [math.log10(max(y, floor)) for y in pos] + [math.log10(floor)]
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 70, 110, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        v = math.log10(y if (y is not None and y > 0 and math.isfinite(y)) else floor)
        return mt + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for e in _log_ticks(y0, y1):
        yy = mt + (1 - (e - y0) / (y1 - y0)) * ph
        out.append(f'<line x1="{ml - 4}" y1="{yy:.2f}" x2="{ml}" y2="{yy:.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{yy + 4:.2f}" text-anchor="end">1e{e}</text>')
    for x in sorted(set(xs)):
        xx = px(x)
        out.append(f'<line x1="{xx:.2f}" y1="{mt + ph}" x2="{xx:.2f}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{xx:.2f}" y="{mt + ph + 18}" text-anchor="middle">{x:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)} (log scale)</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts, key=lambda p: p[0]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}" '
                   f'data-series="{escape(label)}"/>')
        ly_ = mt + 14 * i + 6
        out.append(f'<text x="{ml + pw + 10}" y="{ly_ + 4}" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
