"""Synthetic grayscale scenes with known texture-element positions.

These are test oracles for the image path: separated disks with analytic
centroids, and a tiled plane whose tile centres are exactly the points that
:func:`simulate_on_plane` produces for the same regular-lattice spec.
Rendering is anti-aliased by averaging a ``supersample x supersample`` grid
of subpixel samples.
"""

from __future__ import annotations

import numpy as np

from .geometry import backproject
from .imaging import GrayImage, ProbabilityMap, default_window
from .simulate import SimulationSpec, lattice_phase, plane_coordinates, plane_frame

INK = 0.15
PAPER = 0.85


def _subpixel_offsets(supersample):
    return (np.arange(supersample) + 0.5) / supersample - 0.5


def render_disks(centers_rc, radii, shape, supersample: int = 4, ink: float = INK,
                 paper: float = PAPER) -> GrayImage:
    """Dark disks on a light ground; centres in fractional ``(row, col)`` pixels."""
    h, w = shape
    cover = np.zeros((h, w))
    off = _subpixel_offsets(supersample)
    for (r0, c0), rad in zip(np.asarray(centers_rc, float), np.broadcast_to(radii, len(centers_rc))):
        rlo, rhi = max(0, int(np.floor(r0 - rad)) - 1), min(h, int(np.ceil(r0 + rad)) + 2)
        clo, chi = max(0, int(np.floor(c0 - rad)) - 1), min(w, int(np.ceil(c0 + rad)) + 2)
        rr = np.arange(rlo, rhi)[:, None, None, None] + off[None, None, :, None]
        cc = np.arange(clo, chi)[None, :, None, None] + off[None, None, None, :]
        inside = (rr - r0) ** 2 + (cc - c0) ** 2 <= rad ** 2
        cover[rlo:rhi, clo:chi] = np.maximum(cover[rlo:rhi, clo:chi], inside.mean(axis=(2, 3)))
    return GrayImage(paper + (ink - paper) * cover)


def disk_grid(rows: int = 4, cols: int = 5, pitch: int = 56, radius: float = 24.0, pad: int = 32,
              jitter: float = 0.0, seed: int = 0):
    """Centres, radii and image shape for a ``rows x cols`` grid of separated disks.

    ``jitter`` shifts centres by up to that many pixels and radii by up to 3%,
    for oracles that should not rely on exact symmetry.  With the defaults and
    ``k1 = 30`` every search window that fits in the image is dominated by a
    disk centre, so the background produces no maxima.
    """
    rng = np.random.default_rng(seed)
    r = pad + pitch * np.arange(rows)
    c = pad + pitch * np.arange(cols)
    centers = np.array([(a, b) for a in r for b in c], dtype=float)
    radii = np.full(len(centers), float(radius))
    if jitter:
        centers += rng.uniform(-jitter, jitter, centers.shape)
        radii *= 1 + rng.uniform(-0.03, 0.03, len(radii))
    shape = (2 * pad + pitch * (rows - 1), 2 * pad + pitch * (cols - 1))
    return centers, radii, shape


def gaussian_bumps(centers_rc, shape, sigma: float = 3.0, heights=None) -> ProbabilityMap:
    """Probability map made of Gaussian bumps, scaled to max 1, on the default window."""
    h, w = shape
    rr, cc = np.mgrid[0:h, 0:w].astype(float)
    y = np.zeros(shape)
    heights = np.ones(len(centers_rc)) if heights is None else np.asarray(heights, float)
    for (r0, c0), a in zip(np.asarray(centers_rc, float), heights):
        y = np.maximum(y, a * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * sigma ** 2)))
    return ProbabilityMap(y / y.max(), default_window(w, h))


def render_tiles(spec: SimulationSpec, size_px: tuple[int, int], grout: float = 0.15,
                 supersample: int = 3, ink: float = INK, paper: float = PAPER) -> GrayImage:
    """Image of a plane covered by square tiles centred on the spec's lattice.

    The image spans the camera window; ``grout`` is the fraction of the
    lattice spacing taken by the light gaps between dark tiles.
    """
    if spec.kind != "regular":
        raise ValueError("tiles need a regular-lattice spec")
    w, h = size_px
    window = spec.camera.window
    if not np.isclose(window.width / w, window.height / h, rtol=1e-9):
        raise ValueError("image size does not match the window aspect ratio")
    p = window.width / w
    off = _subpixel_offsets(supersample)
    frame = plane_frame(spec.orientation, spec.camera)
    phase = lattice_phase(spec)
    s = spec.grid_spacing
    img = np.empty((h, w))
    cols = np.arange(w)[:, None] + off[None, :]
    for r in range(h):
        rows = r + off
        x1 = window.a1 + (cols[None, :, :] + 0.5) * p
        x2 = window.b2 - (rows[:, None, None] + 0.5) * p
        x = np.stack(np.broadcast_arrays(x1, x2), axis=-1).reshape(-1, 2)
        uv = plane_coordinates(backproject(x, spec.orientation, spec.camera), frame)
        q = (uv - phase) / s
        tile = np.max(np.abs(q - np.round(q)), axis=1) < (1 - grout) / 2
        cover = tile.reshape(supersample, w, supersample).mean(axis=(0, 2))
        img[r] = paper + (ink - paper) * cover
    return GrayImage(img)
