import math

import numpy as np

from shapetex.geometry import SurfaceOrientation, admissible_slant_bound


def random_orientations(camera, n, seed=0, max_fraction=0.9, h=1.0):
    """Admissible orientations with slant uniform in [0, max_fraction * u(tilt))."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        eta2 = rng.uniform(0, 2 * math.pi)
        u = admissible_slant_bound(eta2, camera)
        out.append(SurfaceOrientation(rng.uniform(0, max_fraction * u), eta2, h))
    return out


def random_window_points(window, n, rng):
    return np.column_stack(
        [rng.uniform(window.a1, window.a2, n), rng.uniform(window.b1, window.b2, n)]
    )


def line_integral(func, xi, xj, intervals=10_000):
    """Composite Simpson rule for the integral of ``func`` along the segment [xi, xj]."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    t = np.linspace(0.0, 1.0, intervals + 1)
    pts = xi[None, :] + t[:, None] * (xj - xi)[None, :]
    vals = func(pts)
    w = np.ones(intervals + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return float(np.linalg.norm(xj - xi) * np.sum(w * vals) / (3 * intervals))
