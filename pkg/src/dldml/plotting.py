"""Standalone SVG figures written as plain text.

Numbers are printed with fixed precision so the same inputs give
byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def _n(v: float) -> str:
    return f"{v:.2f}"


class Svg:
    def __init__(self, width: float, height: float):
        self.width, self.height = width, height
        self.parts = []

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, size=12, anchor="start", rotate=None):
        tr = f' transform="rotate({rotate} {_n(x)} {_n(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" '
                 f'text-anchor="{anchor}" font-family="sans-serif"{tr}>{escape(str(s))}</text>')

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" '
                 f'stroke="{stroke}" stroke-width="{width}"{d}/>')

    def polyline(self, pts, stroke="#000", width=1.0, dash=None):
        if len(pts) < 2:
            return
        d = f' stroke-dasharray="{dash}"' if dash else ""
        p = " ".join(f"{_n(x)},{_n(y)}" for x, y in pts)
        self.add(f'<polyline points="{p}" fill="none" stroke="{stroke}" '
                 f'stroke-width="{width}"{d}/>')

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.add(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" '
                 f'fill="{fill}" stroke="{stroke}"/>')

    def circle(self, cx, cy, r, fill="#999", stroke="none"):
        self.add(f'<circle cx="{_n(cx)}" cy="{_n(cy)}" r="{_n(r)}" fill="{fill}" '
                 f'stroke="{stroke}"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(self.width)}" '
                f'height="{_n(self.height)}" viewBox="0 0 {_n(self.width)} {_n(self.height)}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>',
                          *self.parts, "</svg>"]) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        return path


def _viridis_like(t: float) -> str:
    # a short blue-green-yellow ramp; enough to read a speed map
    stops = [(0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
             (0.75, (94, 201, 98)), (1.0, (253, 231, 37))]
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(stops[:-1], stops[1:]):
        if t <= t1:
            w = (t - t0) / (t1 - t0)
            r, g, b = (int(round(a + w * (b_ - a))) for a, b_ in zip(c0, c1))
            return f"#{r:02x}{g:02x}{b:02x}"
    return "#fde725"


class _Axes:
    """Maps data coordinates into a plot box with margins for labels."""

    def __init__(self, svg, x0, x1, y0, y1, left=60, right=20, top=30, bottom=45,
                 equal=False):
        self.svg = svg
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.left, self.top = left, top
        self.w = svg.width - left - right
        self.h = svg.height - top - bottom
        if equal:
            s = min(self.w / (x1 - x0), self.h / (y1 - y0))
            self.w, self.h = s * (x1 - x0), s * (y1 - y0)

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y):
        return self.top + self.h - (y - self.y0) / (self.y1 - self.y0) * self.h

    def frame(self, xlabel="", ylabel="", title="", ticks=5):
        s = self.svg
        s.rect(self.left, self.top, self.w, self.h, "none", stroke="#000")
        for i in range(ticks + 1):
            xv = self.x0 + i * (self.x1 - self.x0) / ticks
            yv = self.y0 + i * (self.y1 - self.y0) / ticks
            s.line(self.px(xv), self.top + self.h, self.px(xv), self.top + self.h + 4)
            s.text(self.px(xv), self.top + self.h + 16, f"{xv:.4g}", 10, "middle")
            s.line(self.left - 4, self.py(yv), self.left, self.py(yv))
            s.text(self.left - 6, self.py(yv) + 3, f"{yv:.4g}", 10, "end")
        if xlabel:
            s.text(self.left + self.w / 2, self.top + self.h + 34, xlabel, 12, "middle")
        if ylabel:
            s.text(14, self.top + self.h / 2, ylabel, 12, "middle", rotate=-90)
        if title:
            s.text(self.left + self.w / 2, 18, title, 13, "middle")


def _posts(ax: _Axes, centers, radius, y_lo, y_hi, periodic_height=None):
    for cx, cy in centers:
        shifts = [0.0]
        if periodic_height:
            shifts = [k * periodic_height for k in range(-2, 60)]
        for sh in shifts:
            y = cy + sh
            if y + radius < y_lo or y - radius > y_hi:
                continue
            ax.svg.circle(ax.px(cx), ax.py(y), radius * ax.w / (ax.x1 - ax.x0),
                          fill="#bbbbbb")


def speed_heatmap(speed: np.ndarray, h_um: float, title: str = "speed",
                  max_cells: int = 240) -> Svg:
    """Cell-centred speed map, block-averaged down to at most ``max_cells`` columns."""
    nx, ny = speed.shape
    f = max(1, int(math.ceil(nx / max_cells)), int(math.ceil(ny / (max_cells // 3))))
    mx, my = nx // f, ny // f
    blocks = speed[:mx * f, :my * f].reshape(mx, f, my, f).mean(axis=(1, 3))
    width_um, height_um = mx * f * h_um, my * f * h_um
    aspect = height_um / width_um
    svg = Svg(900, max(160, 900 * aspect + 90))
    ax = _Axes(svg, 0, width_um, 0, height_um, equal=True)
    vmax = float(blocks.max()) or 1.0
    cw, ch = ax.w / mx, ax.h / my
    for i in range(mx):
        for j in range(my):
            svg.rect(ax.left + i * cw, ax.top + ax.h - (j + 1) * ch, cw + 0.05, ch + 0.05,
                     _viridis_like(blocks[i, j] / vmax))
    ax.frame("x (um)", "y (um)", f"{title} (max {vmax:.4g} m/s)")
    return svg


def trajectory_overlay(curves, centers=None, radius=0.0, bounds=None, periodic_height=None,
                       title="trajectories") -> Svg:
    """``curves`` is a list of (label, x_um, y_um[, dashed]) tuples."""
    xs = np.concatenate([np.asarray(c[1], float) for c in curves]) if curves else np.zeros(1)
    ys = np.concatenate([np.asarray(c[2], float) for c in curves]) if curves else np.zeros(1)
    if bounds is None:
        bounds = (float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max()))
    x0, x1, y0, y1 = bounds
    pad = 0.05 * max(y1 - y0, 1.0)
    y0, y1 = y0 - pad, y1 + pad
    svg = Svg(900, 420 + 18 * len(curves))
    ax = _Axes(svg, x0, x1, y0, y1, bottom=45 + 18 * len(curves))
    if centers is not None and len(centers):
        _posts(ax, centers, radius, y0, y1, periodic_height)
    for i, c in enumerate(curves):
        label, cx, cy = c[0], np.asarray(c[1], float), np.asarray(c[2], float)
        dash = "5,3" if len(c) > 3 and c[3] else None
        step = max(1, len(cx) // 1500)
        pts = [(ax.px(a), ax.py(b)) for a, b in zip(cx[::step], cy[::step])]
        color = PALETTE[i % len(PALETTE)]
        svg.polyline(pts, color, 1.5, dash)
        ly = svg.height - 18 * (len(curves) - i) + 4
        svg.line(ax.left, ly - 4, ax.left + 24, ly - 4, color, 2, dash)
        svg.text(ax.left + 30, ly, label, 11)
    ax.frame("x (um)", "y (um)", title)
    return svg


def dc_comparison(rows, curve_n, curve_davis, curve_inglis) -> Svg:
    """Simulated D_c intervals against the two correlations over N."""
    svg = Svg(700, 460)
    ymax = max([*curve_davis, *curve_inglis, *(r["upper_um"] for r in rows)]) * 1.1
    ax = _Axes(svg, min(curve_n), max(curve_n), 0, ymax, bottom=80)
    svg.polyline([(ax.px(n), ax.py(d)) for n, d in zip(curve_n, curve_davis)], PALETTE[0], 2)
    svg.polyline([(ax.px(n), ax.py(d)) for n, d in zip(curve_n, curve_inglis)], PALETTE[2], 2,
                 "6,3")
    for r in rows:
        x = ax.px(r["n"])
        svg.line(x, ax.py(r["lower_um"]), x, ax.py(r["upper_um"]), PALETTE[1], 2)
        svg.circle(x, ax.py(r["midpoint_um"]), 4, PALETTE[1])
    ax.frame("period number N", "critical diameter (um)", "critical diameter vs N")
    for i, (lab, col, dash) in enumerate([("empirical 1.4 G eps^0.48", PALETTE[0], None),
                                          ("2 alpha G eps, alpha = sqrt(N/3)", PALETTE[2], "6,3"),
                                          ("simulated interval", PALETTE[1], None)]):
        y = svg.height - 50 + 15 * i
        svg.line(ax.left, y - 4, ax.left + 24, y - 4, col, 2, dash)
        svg.text(ax.left + 30, y, lab, 11)
    return svg


def confusion_heatmap(matrix, title: str, labels=("zigzag", "bumped")) -> Svg:
    m = np.asarray(matrix, dtype=int)
    svg = Svg(360, 340)
    cell, x0, y0 = 110, 110, 60
    peak = max(int(m.max()), 1)
    for i in range(2):
        for j in range(2):
            t = m[i, j] / peak
            shade = int(round(255 - 180 * t))
            svg.rect(x0 + j * cell, y0 + i * cell, cell, cell, f"#{shade:02x}{shade:02x}ff",
                     stroke="#000")
            svg.text(x0 + j * cell + cell / 2, y0 + i * cell + cell / 2 + 6, int(m[i, j]), 18,
                     "middle")
    for k, lab in enumerate(labels):
        svg.text(x0 + k * cell + cell / 2, y0 + 2 * cell + 20, lab, 12, "middle")
        svg.text(x0 - 8, y0 + k * cell + cell / 2 + 4, lab, 12, "end")
    svg.text(x0 + cell, y0 + 2 * cell + 40, "predicted", 12, "middle")
    svg.text(16, y0 + cell, "true", 12, "middle", rotate=-90)
    svg.text(svg.width / 2, 30, title, 14, "middle")
    return svg
