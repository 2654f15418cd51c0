"""Static SVG figures: point patterns, orientation arrows, probability maps.

Every figure maps the observation window onto a canvas 800 px wide whose
height follows the window aspect ratio.  ``x1`` grows to the right and ``x2``
upwards, so the SVG ``y`` axis is flipped.  Numbers are written with fixed
precision, which makes the output byte-for-byte deterministic.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .geometry import ObservationWindow
from .imaging import ProbabilityMap
from .pattern import PointPattern

CANVAS_WIDTH = 800
MAP_CELLS = 160


class _Canvas:
    def __init__(self, window: ObservationWindow, title: str = ""):
        self.window = window
        self.scale = CANVAS_WIDTH / window.width
        self.height = window.height * self.scale
        self.items = []
        self.title = title

    def xy(self, x):
        x = np.asarray(x, dtype=float)
        return (x[..., 0] - self.window.a1) * self.scale, (self.window.b2 - x[..., 1]) * self.scale

    def add(self, item: str):
        self.items.append(item)

    def points(self, pts, r=2.5, fill="#222222"):
        px, py = self.xy(np.asarray(pts).reshape(-1, 2))
        for a, b in zip(px, py):
            self.add(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r}" fill="{fill}"/>')

    def render(self) -> str:
        w = self.window
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_WIDTH}" height="{self.height:.2f}" '
            f'viewBox="0 0 {CANVAS_WIDTH} {self.height:.2f}">',
            f"<!-- window [{w.a1:.6g}, {w.a2:.6g}] x [{w.b1:.6g}, {w.b2:.6g}] mapped to "
            f"{CANVAS_WIDTH} x {self.height:.2f} px; x1 to the right, x2 upwards (SVG y flipped) -->",
            f'<rect x="0" y="0" width="{CANVAS_WIDTH}" height="{self.height:.2f}" fill="white" stroke="black"/>',
        ]
        if self.title:
            head.append(f'<title>{escape(self.title)}</title>')
        return "\n".join(head + self.items + ["</svg>"]) + "\n"


def _map_cells(canvas: _Canvas, pmap: ProbabilityMap, cells: int = MAP_CELLS):
    """Block-averaged gray rectangles, at most ``cells`` blocks across."""
    block = max(1, math.ceil(max(pmap.width, pmap.height) / cells))
    g = pmap.grid
    p = pmap.pixel_size
    for r0 in range(0, pmap.height, block):
        for c0 in range(0, pmap.width, block):
            v = float(g[r0:r0 + block, c0:c0 + block].mean())
            level = int(round(255 * v))
            x1 = pmap.window.a1 + c0 * p
            x2 = pmap.window.b2 - r0 * p
            (sx, sy) = canvas.xy(np.array([x1, x2]))
            nb_c = min(block, pmap.width - c0)
            nb_r = min(block, pmap.height - r0)
            canvas.add(
                f'<rect x="{sx:.2f}" y="{sy:.2f}" width="{nb_c * p * canvas.scale:.2f}" '
                f'height="{nb_r * p * canvas.scale:.2f}" fill="rgb({level},{level},{level})"/>'
            )


def pattern_svg(pattern: PointPattern, title: str = "point pattern") -> str:
    c = _Canvas(pattern.window, title)
    c.points(pattern.points)
    return c.render()


def orientation_svg(pattern: PointPattern, eta1: float, eta2: float, title: str = "") -> str:
    """Pattern plus an arrow from the window centre along the projected normal.

    The arrow points in the tilt direction; its length is proportional to
    ``sin(eta1)``, reaching 40% of the shorter window side at 90 degrees.
    """
    w = pattern.window
    c = _Canvas(w, title or "estimated orientation")
    c.points(pattern.points)
    length = 0.4 * min(w.width, w.height) * math.sin(eta1)
    tip = w.center + length * np.array([math.cos(eta2), math.sin(eta2)])
    (x0, y0), (x1, y1) = c.xy(w.center), c.xy(tip)
    c.add('<defs><marker id="head" markerWidth="10" markerHeight="8" refX="9" refY="4" orient="auto">'
          '<path d="M0,0 L10,4 L0,8 z" fill="#c0392b"/></marker></defs>')
    c.add(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" stroke="#c0392b" '
          f'stroke-width="4" marker-end="url(#head)"/>')
    label = f"slant {math.degrees(eta1):.1f} deg, tilt {math.degrees(eta2):.1f} deg"
    c.add(f'<text x="10" y="24" font-family="sans-serif" font-size="18" fill="#c0392b">{label}</text>')
    return c.render()


def map_svg(pmap: ProbabilityMap, title: str = "probability map") -> str:
    c = _Canvas(pmap.window, title)
    _map_cells(c, pmap)
    return c.render()


def overlay_svg(pmap: ProbabilityMap, maxima_xy, edges, points, title: str = "detection overlay") -> str:
    """Map with candidate maxima (blue), neighbour edges (green) and final points (red)."""
    c = _Canvas(pmap.window, title)
    _map_cells(c, pmap)
    maxima_xy = np.asarray(maxima_xy, dtype=float).reshape(-1, 2)
    for i, j in edges:
        (a, b), (d, e) = c.xy(maxima_xy[i]), c.xy(maxima_xy[j])
        c.add(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{d:.2f}" y2="{e:.2f}" stroke="#27ae60" stroke-width="1"/>')
    c.points(maxima_xy, r=1.5, fill="#2e86c1")
    c.points(points, r=3.5, fill="#c0392b")
    return c.render()
