"""Dependency-free SVG line charts for reports.

Deterministic output: fixed palette, fixed float formatting, no timestamps.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

_MARGIN = dict(left=64, right=16, top=36, bottom=44)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def render_line_chart(series, *, title="", xlabel="", ylabel="",
                      width=720, height=480, bands=(), y_range=None) -> str:
    """SVG document with polyline series and optional shaded bands.

    series: iterable of (label, x values, y values).
    bands: iterable of (x values, y_low values, y_high values) polygons,
    drawn behind the lines in matching palette colors.
    """
    series = [(str(lbl), [float(v) for v in xs], [float(v) for v in ys])
              for lbl, xs, ys in series]
    bands = [([float(v) for v in xs], [float(v) for v in lo], [float(v) for v in hi])
             for xs, lo, hi in bands]
    xs_all = [v for _, xs, _ in series for v in xs] + [v for xs, _, _ in bands for v in xs]
    ys_all = [v for _, _, ys in series for v in ys]
    ys_all += [v for _, lo, hi in bands for v in lo + hi]
    if not xs_all or not ys_all:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    px0, px1 = _MARGIN["left"], width - _MARGIN["right"]
    py0, py1 = height - _MARGIN["bottom"], _MARGIN["top"]

    def sx(v):
        return px0 + (v - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def sy(v):
        return py0 + (v - y_lo) / (y_hi - y_lo) * (py1 - py0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{escape(title)}</text>'
        )
    # axes and ticks
    parts.append(
        f'<path d="M {px0} {py1} L {px0} {py0} L {px1} {py0}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    for t in _nice_ticks(x_lo, x_hi):
        x = sx(t)
        parts.append(f'<line x1="{x:.1f}" y1="{py0}" x2="{x:.1f}" y2="{py0 + 4}" stroke="#333"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{py0 + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        y = sy(t)
        parts.append(f'<line x1="{px0 - 4}" y1="{y:.1f}" x2="{px0}" y2="{y:.1f}" stroke="#333"/>')
        parts.append(
            f'<text x="{px0 - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{(px0 + px1) / 2:.1f}" y="{height - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{(py0 + py1) / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {(py0 + py1) / 2:.1f})">{escape(ylabel)}</text>'
        )
    for b, (xs, lo, hi) in enumerate(bands):
        color = PALETTE[b % len(PALETTE)]
        pts = [f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, lo)]
        pts += [f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(reversed(xs), reversed(hi))]
        parts.append(
            f'<polygon points="{" ".join(pts)}" fill="{color}" '
            'fill-opacity="0.18" stroke="none"/>'
        )
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if label:
            ly = py1 + 14 + 16 * i
            parts.append(
                f'<line x1="{px1 - 150}" y1="{ly - 4:.1f}" x2="{px1 - 126}" '
                f'y2="{ly - 4:.1f}" stroke="{color}" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{px1 - 120}" y="{ly:.1f}" font-family="sans-serif" '
                f'font-size="11">{escape(label)}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
