"""Deterministic SVG charts (scatter with fit line, line chart, bar chart).

Output is plain text with fixed float formatting so identical inputs yield
byte-identical files, which makes golden-file testing exact.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

W, H = 480, 360
MARGIN = 52


def _fmt(v: float) -> str:
    return format(float(v), ".2f")


def _scale(vals, lo_pad=0.05, hi_pad=0.05):
    vmin, vmax = float(min(vals)), float(max(vals))
    if vmax == vmin:
        vmin -= 0.5
        vmax += 0.5
    span = vmax - vmin
    return vmin - lo_pad * span, vmax + hi_pad * span


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="monospace" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]


def _axes(xlo, xhi, ylo, yhi, xlabel, ylabel) -> tuple[list[str], object, object]:
    def sx(x):
        return MARGIN + (x - xlo) / (xhi - xlo) * (W - 2 * MARGIN)

    def sy(y):
        return H - MARGIN - (y - ylo) / (yhi - ylo) * (H - 2 * MARGIN)

    parts = [
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<text x="{W // 2}" y="{H - 14}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{H // 2}" text-anchor="middle" transform="rotate(-90 14 {H // 2})">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = xlo + frac * (xhi - xlo)
        yv = ylo + frac * (yhi - ylo)
        parts.append(f'<text x="{_fmt(sx(xv))}" y="{H - MARGIN + 16}" text-anchor="middle">{_fmt(xv)}</text>')
        parts.append(f'<text x="{MARGIN - 6}" y="{_fmt(sy(yv) + 4)}" text-anchor="end">{_fmt(yv)}</text>')
    return parts, sx, sy


def scatter_svg(points: list[tuple[float, float]], title: str,
                xlabel: str, ylabel: str,
                annotation: str = "", labels: list[str] | None = None) -> str:
    """Scatter plot; with >= 2 points a least-squares line is drawn, a single
    point is flagged instead."""
    if not points:
        raise ValidationError("no points to plot")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    xlo, xhi = _scale(xs)
    ylo, yhi = _scale(ys)
    parts = _header(title)
    axes, sx, sy = _axes(xlo, xhi, ylo, yhi, xlabel, ylabel)
    parts += axes
    if len(points) >= 2:
        slope, intercept = np.polyfit(np.asarray(xs, dtype=np.float64),
                                      np.asarray(ys, dtype=np.float64), 1)
        y0, y1 = slope * xlo + intercept, slope * xhi + intercept
        parts.append(
            f'<line x1="{_fmt(sx(xlo))}" y1="{_fmt(sy(y0))}" x2="{_fmt(sx(xhi))}" '
            f'y2="{_fmt(sy(y1))}" stroke="#888888" stroke-dasharray="4 3"/>'
        )
    else:
        parts.append(f'<text x="{W // 2}" y="34" text-anchor="middle" fill="#aa0000">'
                     f'single point: no fitted line</text>')
    for i, (x, y) in enumerate(points):
        parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3.5" fill="#1f6fb4"/>')
        if labels:
            parts.append(f'<text x="{_fmt(sx(x) + 5)}" y="{_fmt(sy(y) - 5)}">{labels[i]}</text>')
    if annotation:
        parts.append(f'<text x="{W - MARGIN}" y="34" text-anchor="end">{annotation}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart_svg(series: dict[str, list[tuple[float, float]]], title: str,
                   xlabel: str, ylabel: str) -> str:
    """One polyline per named series, points marked."""
    if not series or all(not pts for pts in series.values()):
        raise ValidationError("no series to plot")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    xlo, xhi = _scale(xs)
    ylo, yhi = _scale(ys)
    parts = _header(title)
    axes, sx, sy = _axes(xlo, xhi, ylo, yhi, xlabel, ylabel)
    parts += axes
    palette = ["#1f6fb4", "#c05020", "#3c8a4a", "#7a4fa0", "#a0a030"]
    for idx, name in enumerate(sorted(series)):
        pts = sorted(series[name])
        color = palette[idx % len(palette)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.5" fill="{color}"/>')
        parts.append(f'<text x="{W - MARGIN}" y="{34 + 14 * idx}" text-anchor="end" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart_svg(bars: list[tuple[str, float]], title: str, ylabel: str) -> str:
    """Vertical bars with value labels."""
    if not bars:
        raise ValidationError("no bars to plot")
    ylo = min(0.0, min(v for _, v in bars))
    yhi = max(v for _, v in bars)
    if yhi == ylo:
        yhi = ylo + 1.0
    yhi *= 1.1
    parts = _header(title)
    axes, _, sy = _axes(0.0, 1.0, ylo, yhi, "", ylabel)
    parts += axes
    n = len(bars)
    slot = (W - 2 * MARGIN) / n
    for i, (name, v) in enumerate(bars):
        x0 = MARGIN + i * slot + 0.15 * slot
        width = 0.7 * slot
        y0 = sy(max(v, 0.0))
        height = abs(sy(0.0) - sy(v))
        parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(width)}" '
                     f'height="{_fmt(height)}" fill="#1f6fb4"/>')
        parts.append(f'<text x="{_fmt(x0 + width / 2)}" y="{H - MARGIN + 16}" '
                     f'text-anchor="middle">{name}</text>')
        parts.append(f'<text x="{_fmt(x0 + width / 2)}" y="{_fmt(y0 - 4)}" '
                     f'text-anchor="middle">{_fmt(v)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
