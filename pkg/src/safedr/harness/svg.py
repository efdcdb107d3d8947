"""Minimal SVG charts written by hand: line charts and heatmaps.

Nothing here depends on a plotting stack; charts are assembled as text so
reports stay reproducible and diffable.  Constraint charts draw the budget
as a dashed rule and shade the region above it red, the house convention
for "violations live up here".
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["Series", "line_chart", "heatmap_chart"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 720, 440
_ML, _MR, _MT, _MB = 72, 24, 44, 58


class Series:
    """One named line: x and y arrays; NaN y values break the line."""

    def __init__(self, name, x, y, color=None, dashed=False):
        self.name = str(name)
        self.x = np.asarray(x, dtype=float).reshape(-1)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.x.shape != self.y.shape:
            raise ValueError("x and y must have the same length")
        self.color = color
        self.dashed = dashed


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks or [lo, hi]


def _fmt_tick(value: float) -> str:
    if value == 0:
        return "0"
    if abs(value) >= 1e4 or abs(value) < 1e-3:
        return f"{value:.1e}"
    text = f"{value:.6g}"
    return text


class _Frame:
    """Affine map from data coordinates to the plot rectangle."""

    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi

    def x(self, v):
        return _ML + (v - self.xlo) / (self.xhi - self.xlo) * (_W - _ML - _MR)

    def y(self, v):
        return _H - _MB - (v - self.ylo) / (self.yhi - self.ylo) * (_H - _MT - _MB)


def _axes(frame: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    parts = [
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#333" stroke-width="1"/>',
        f'<text x="{_W / 2:.1f}" y="{_MT - 16}" text-anchor="middle" '
        f'font-size="15" font-weight="bold">{title}</text>',
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 14}" '
        f'text-anchor="middle" font-size="13">{xlabel}</text>',
        f'<text x="20" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'font-size="13" transform="rotate(-90 20 {(_MT + _H - _MB) / 2:.1f})">'
        f'{ylabel}</text>',
    ]
    for t in _nice_ticks(frame.xlo, frame.xhi):
        if t < frame.xlo - 1e-12 or t > frame.xhi + 1e-12:
            continue
        px = frame.x(t)
        parts.append(f'<line x1="{px:.1f}" y1="{_H - _MB}" x2="{px:.1f}" '
                     f'y2="{_H - _MB + 5}" stroke="#333"/>')
        parts.append(f'<text x="{px:.1f}" y="{_H - _MB + 19}" '
                     f'text-anchor="middle" font-size="11">{_fmt_tick(t)}</text>')
    for t in _nice_ticks(frame.ylo, frame.yhi):
        if t < frame.ylo - 1e-12 or t > frame.yhi + 1e-12:
            continue
        py = frame.y(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{py:.1f}" x2="{_ML}" '
                     f'y2="{py:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{_ML - 9}" y="{py + 4:.1f}" text-anchor="end" '
                     f'font-size="11">{_fmt_tick(t)}</text>')
        parts.append(f'<line x1="{_ML}" y1="{py:.1f}" x2="{_W - _MR}" '
                     f'y2="{py:.1f}" stroke="#ddd" stroke-width="0.5"/>')
    return parts


def _polylines(frame: _Frame, s: Series, color: str) -> list[str]:
    parts = []
    dash = ' stroke-dasharray="6 4"' if s.dashed else ""
    runs: list[list[tuple[float, float]]] = [[]]
    for xv, yv in zip(s.x, s.y):
        if math.isnan(yv):
            if runs[-1]:
                runs.append([])
            continue
        runs[-1].append((frame.x(xv), frame.y(yv)))
    pts_total = sum(len(r) for r in runs)
    for run in runs:
        if len(run) >= 2:
            coords = " ".join(f"{px:.2f},{py:.2f}" for px, py in run)
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.8"{dash}/>')
    if pts_total <= 60:  # sparse series (eval cadence): mark the points
        for run in runs:
            for px, py in run:
                parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.6" '
                             f'fill="{color}"/>')
    return parts


def line_chart(path, series, title="", xlabel="", ylabel="",
               budget=None, note=None) -> Path:
    """Write a line chart; a budget draws a dashed rule with red above it."""
    series = [s for s in series if s.y.size and not np.all(np.isnan(s.y))]
    if not series:
        raise ValueError("nothing to plot")
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y[~np.isnan(s.y)] for s in series])
    xlo, xhi = float(xs.min()), float(xs.max())
    ylo, yhi = float(ys.min()), float(ys.max())
    if budget is not None:
        ylo, yhi = min(ylo, budget), max(yhi, budget)
    pad = 0.06 * (yhi - ylo or 1.0)
    frame = _Frame(xlo, xhi, ylo - pad, yhi + pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>']
    if budget is not None:
        by = frame.y(budget)
        parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                     f'height="{max(by - _MT, 0):.1f}" fill="#d62728" '
                     f'fill-opacity="0.08"/>')
    parts.extend(_axes(frame, title, xlabel, ylabel))
    if budget is not None:
        by = frame.y(budget)
        parts.append(f'<line x1="{_ML}" y1="{by:.1f}" x2="{_W - _MR}" '
                     f'y2="{by:.1f}" stroke="#d62728" stroke-width="1.4" '
                     f'stroke-dasharray="8 5"/>')
        parts.append(f'<text x="{_W - _MR - 4}" y="{by - 5:.1f}" '
                     f'text-anchor="end" font-size="11" fill="#d62728">'
                     f'budget = {_fmt_tick(budget)}</text>')
    legend_y = _MT + 14
    for i, s in enumerate(series):
        color = s.color or _PALETTE[i % len(_PALETTE)]
        parts.extend(_polylines(frame, s, color))
        lx = _ML + 10
        ly = legend_y + 16 * i
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2.5"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" font-size="12">{s.name}</text>')
    if note:
        parts.append(f'<text x="{_ML}" y="{_H - 34}" font-size="10" '
                     f'fill="#666">{note}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path


def _ramp(u: float) -> str:
    """Two-segment color ramp dark blue -> teal -> yellow for u in [0, 1]."""
    stops = ((68, 1, 84), (33, 145, 140), (253, 231, 37))
    u = min(max(u, 0.0), 1.0)
    if u < 0.5:
        a, b, t = stops[0], stops[1], u / 0.5
    else:
        a, b, t = stops[1], stops[2], (u - 0.5) / 0.5
    rgb = tuple(round(av + (bv - av) * t) for av, bv in zip(a, b))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def heatmap_chart(path, values, row_labels, col_labels, title="",
                  xlabel="", ylabel="") -> Path:
    """Grid heatmap with a colorbar; values is (rows, cols), row 0 at bottom."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2:
        raise ValueError("values must be 2-D")
    rows, cols = vals.shape
    if len(row_labels) != rows or len(col_labels) != cols:
        raise ValueError("label counts must match the grid")
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo or 1.0
    cw = (_W - _ML - _MR - 60) / cols
    ch = (_H - _MT - _MB) / rows
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>',
             f'<text x="{_W / 2:.1f}" y="{_MT - 16}" text-anchor="middle" '
             f'font-size="15" font-weight="bold">{title}</text>',
             f'<text x="{(_ML + _W - _MR - 60) / 2:.1f}" y="{_H - 14}" '
             f'text-anchor="middle" font-size="13">{xlabel}</text>',
             f'<text x="20" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
             f'font-size="13" transform="rotate(-90 20 '
             f'{(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>']
    for i in range(rows):
        for j in range(cols):
            x = _ML + j * cw
            y = _H - _MB - (i + 1) * ch  # row 0 at the bottom
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw:.1f}" '
                         f'height="{ch:.1f}" '
                         f'fill="{_ramp((vals[i, j] - lo) / span)}"/>')
    for j, lab in enumerate(col_labels):
        parts.append(f'<text x="{_ML + (j + 0.5) * cw:.1f}" y="{_H - _MB + 17}" '
                     f'text-anchor="middle" font-size="11">{lab}</text>')
    for i, lab in enumerate(row_labels):
        parts.append(f'<text x="{_ML - 7}" y="{_H - _MB - (i + 0.5) * ch + 4:.1f}" '
                     f'text-anchor="end" font-size="11">{lab}</text>')
    bar_x = _W - _MR - 42
    bar_h = _H - _MT - _MB
    for k in range(64):
        v = k / 63.0
        y = _H - _MB - (k + 1) * bar_h / 64
        parts.append(f'<rect x="{bar_x}" y="{y:.2f}" width="16" '
                     f'height="{bar_h / 64 + 0.5:.2f}" fill="{_ramp(v)}"/>')
    parts.append(f'<text x="{bar_x + 20}" y="{_H - _MB + 3}" font-size="10">'
                 f'{_fmt_tick(lo)}</text>')
    parts.append(f'<text x="{bar_x + 20}" y="{_MT + 9}" font-size="10">'
                 f'{_fmt_tick(hi)}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path
