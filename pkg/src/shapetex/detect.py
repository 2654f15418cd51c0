"""Recover the latent point pattern from a probability map.

Candidate points are windowed local maxima of ``Y``.  Two candidates are
neighbours when ``Y`` stays above ``k2`` times the larger endpoint value
along the straight segment joining them.  Each connected component of this
relation contributes its highest member as one point of the pattern.

Positions are integer ``(row, col)`` pixel indices until the final
conversion to window coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import ProbabilityMap
from .pattern import PointPattern

# A segment is first checked at every COARSE_STRIDE-th sample; only pairs that
# survive are sampled fully.  The coarse min bounds the full min from above.
COARSE_STRIDE = 16
PAIR_CHUNK_SAMPLES = 4_000_000


@dataclass(frozen=True)
class DetectionParams:
    """``k1`` is the half-width of the square search window, in pixels."""

    k1: int = 37
    k2: float = 0.25
    segment_step: float = 0.5
    cutoff: float | None = None

    def __post_init__(self):
        if int(self.k1) != self.k1 or self.k1 < 1:
            raise ValueError(f"k1 must be a positive integer number of pixels, got {self.k1}")
        if not 0 < self.k2 < 1:
            raise ValueError(f"k2 must lie strictly between 0 and 1, got {self.k2}")
        if not self.segment_step > 0:
            raise ValueError("segment_step must be positive")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ValueError("cutoff must be positive when given")

    def to_dict(self) -> dict:
        return {"k1_px": int(self.k1), "window_px": 2 * int(self.k1) + 1, "k2": self.k2,
                "segment_step_px": self.segment_step, "cutoff_px": self.cutoff}


@dataclass(frozen=True)
class MaximaSet:
    rc: np.ndarray  # (n, 2) int, lexicographically sorted
    values: np.ndarray

    def __len__(self):
        return len(self.rc)


def _grid(Y):
    return Y.grid if isinstance(Y, ProbabilityMap) else np.asarray(Y, dtype=float)


def _trailing_max(a, length, axis):
    """``out[i] = max(a[i-length : i])`` along ``axis``, ``-inf`` where empty."""
    a = np.moveaxis(a, axis, -1)
    pad = np.full(a.shape[:-1] + (length,), -np.inf)
    win = np.lib.stride_tricks.sliding_window_view(np.concatenate([pad, a], -1), length, axis=-1)
    return np.moveaxis(win[..., : a.shape[-1], :].max(-1), -1, axis)


def local_maxima(Y, k1: int) -> MaximaSet:
    """Pixels whose ``(2 k1 + 1)``-square window fits in the map and peaks at them.

    On plateaus only the lexicographically smallest ``(row, col)`` of the
    window's maximal pixels qualifies, so a constant map has no maxima.
    """
    y = _grid(Y)
    k1 = int(k1)
    h, w = y.shape
    if 2 * k1 + 1 > min(h, w):
        raise ValueError(f"k1={k1} px does not fit in a {w}x{h} map")
    full = ndimage.maximum_filter(y, size=2 * k1 + 1, mode="constant", cval=-np.inf)
    # max over the window pixels that precede the centre in row-major order
    above = _trailing_max(
        ndimage.maximum_filter1d(y, 2 * k1 + 1, axis=1, mode="constant", cval=-np.inf), k1, axis=0)
    left = _trailing_max(y, k1, axis=1)
    earlier = np.maximum(above, left)
    ok = (y == full) & (y > earlier)
    interior = np.zeros_like(ok)
    interior[k1:h - k1, k1:w - k1] = True
    rc = np.argwhere(ok & interior)
    return MaximaSet(rc, y[rc[:, 0], rc[:, 1]] if len(rc) else np.zeros(0))


def _segment_min(y, a, b, step, stride=1):
    """Min of bilinear ``y`` over segment samples ``k = 0, stride, 2 stride, ..., m`` (``m`` always)."""
    a = np.asarray(a, float).reshape(-1, 2)
    b = np.asarray(b, float).reshape(-1, 2)
    m = np.maximum(1, np.ceil(np.hypot(*(b - a).T) / step)).astype(np.int64)
    counts = (m - 1) // stride + 2  # 0, stride, ... below m, then m itself
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(counts.sum()) - np.repeat(starts, counts)
    pair = np.repeat(np.arange(len(m)), counts)
    k = np.minimum(local * stride, m[pair])
    t = (k / m[pair])[:, None]
    pos = a[pair] + (b[pair] - a[pair]) * t
    vals = ndimage.map_coordinates(y, pos.T, order=1, mode="nearest")
    return np.minimum.reduceat(vals, starts)


def _canonical(x1, x2):
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    return (x1, x2) if tuple(x1) <= tuple(x2) else (x2, x1)


def are_neighbours(x1, x2, Y, k2: float, segment_step: float = 0.5) -> bool:
    """``min`` of ``Y`` along ``[x1, x2]`` is at least ``k2 * max(Y(x1), Y(x2))``.

    Points are ``(row, col)``.  Sampling runs from the lexicographically
    smaller endpoint so the relation is exactly symmetric.
    """
    y = _grid(Y)
    a, b = _canonical(x1, x2)
    ends = ndimage.map_coordinates(y, np.array([a, b]).T, order=1, mode="nearest")
    return bool(_segment_min(y, a, b, segment_step)[0] >= k2 * ends.max())


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # keep the smaller index as root so labels are deterministic
            self.parent[max(ri, rj)] = min(ri, rj)


def neighbour_pairs(maxima: MaximaSet, Y, params: DetectionParams) -> np.ndarray:
    """All pairs ``(i, j)``, ``i < j``, of maxima that are neighbours."""
    y = _grid(Y)
    n = len(maxima)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    rc = maxima.rc.astype(float)
    i, j = np.triu_indices(n, k=1)
    dist = np.hypot(*(rc[j] - rc[i]).T)
    if params.cutoff is not None:
        keep = dist <= params.cutoff
        i, j, dist = i[keep], j[keep], dist[keep]
    need = params.k2 * np.maximum(maxima.values[i], maxima.values[j])
    per_pair = dist / params.segment_step / COARSE_STRIDE + 2
    found = []
    bounds = np.searchsorted(np.cumsum(per_pair), np.arange(0, per_pair.sum() + PAIR_CHUNK_SAMPLES,
                                                            PAIR_CHUNK_SAMPLES))
    bounds = np.unique(np.concatenate([[0], bounds, [len(i)]]))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        ii, jj, nd = i[lo:hi], j[lo:hi], need[lo:hi]
        # maxima are sorted, so rc[ii] is the lexicographically smaller endpoint
        coarse = _segment_min(y, rc[ii], rc[jj], params.segment_step, COARSE_STRIDE) >= nd
        ii, jj, nd = ii[coarse], jj[coarse], nd[coarse]
        if len(ii):
            fine = _segment_min(y, rc[ii], rc[jj], params.segment_step) >= nd
            found.append(np.column_stack([ii[fine], jj[fine]]))
    return np.concatenate(found) if found else np.zeros((0, 2), dtype=np.int64)


def components(maxima: MaximaSet, Y, params: DetectionParams) -> list[list[int]]:
    """Partition of maxima indices into neighbourhood components, ordered by first member."""
    uf = _UnionFind(len(maxima))
    for i, j in neighbour_pairs(maxima, Y, params):
        uf.union(int(i), int(j))
    groups: dict[int, list[int]] = {}
    for k in range(len(maxima)):
        groups.setdefault(uf.find(k), []).append(k)
    return list(groups.values())


def representatives(maxima: MaximaSet, comps) -> np.ndarray:
    """Index of each component's highest member; ties go to the smallest ``(row, col)``."""
    # members are in row-major order, so argmax returns the lexicographically first
    return np.array([c[int(np.argmax(maxima.values[c]))] for c in comps], dtype=np.int64)


def detection_window(pmap: ProbabilityMap, k1: int):
    """Part of the map window where a full search window fits around each pixel."""
    return pmap.window.shrink(int(k1) * pmap.pixel_size)


def latent_points(pmap: ProbabilityMap, params: DetectionParams) -> PointPattern:
    """One point per neighbourhood component, in window coordinates.

    The pattern's window is :func:`detection_window`, the only region where
    a point can be found, so it can be passed to the estimator as is.
    """
    maxima = local_maxima(pmap, params.k1)
    comps = components(maxima, pmap, params)
    reps = representatives(maxima, comps) if comps else np.zeros(0, dtype=np.int64)
    pts = pmap.to_window(maxima.rc[reps]) if len(reps) else np.zeros((0, 2))
    meta = {
        "detection": {
            **params.to_dict(),
            "n_maxima": len(maxima),
            "n_components": len(comps),
            "map_window": pmap.window.to_dict(),
        }
    }
    return PointPattern(pts, detection_window(pmap, params.k1), meta)
