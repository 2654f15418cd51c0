"""Ground-truth point patterns for a textured plane seen through the camera.

Two routes produce the same image-plane intensity ``beta * c^-2(x)``:

* :func:`simulate_on_plane` lays a homogeneous pattern (lattice or Poisson) on
  the 3D plane and projects it, which is how the texture physically arises;
* :func:`simulate_by_thinning` samples the inhomogeneous Poisson process in the
  image directly and serves as an independent check of the first.

All randomness comes from numpy's counter-based Philox generator so that a
seed reproduces a pattern bit for bit on any platform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError
from .geometry import (
    CameraModel,
    ObservationWindow,
    ScalingContext,
    SurfaceOrientation,
    backproject,
    integrate_over_window,
    perspective_c_inv2,
    project_to_image,
)
from .pattern import PointPattern

PRNG_ID = "numpy.random.Philox(4x64-10)"

# Plane region = preimage of the window, dilated by this many expected point gaps.
MARGIN_GAPS = 3.0
DOMINATOR_GRID = 512
DOMINATOR_SAFETY = 1.01


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SimulationSpec:
    """What to simulate on the plane.

    Exactly one of ``plane_intensity`` (points per unit plane area, Poisson)
    or ``grid_spacing`` (lattice spacing on the plane, regular) applies,
    according to ``kind``.
    """

    kind: str
    orientation: SurfaceOrientation
    camera: CameraModel
    seed: int = 0
    plane_intensity: float | None = None
    grid_spacing: float | None = None
    random_phase: bool = False

    def __post_init__(self):
        if self.kind == "poisson":
            if self.plane_intensity is None or not self.plane_intensity > 0:
                raise ValueError("poisson simulation needs plane_intensity > 0")
        elif self.kind == "regular":
            if self.grid_spacing is None or not self.grid_spacing > 0:
                raise ValueError("regular simulation needs grid_spacing > 0")
        else:
            raise ValueError(f"unknown simulation kind {self.kind!r}")

    @classmethod
    def for_beta(cls, kind, beta, orientation, camera, seed=0, random_phase=False):
        """Spec whose image-plane mean intensity is ``beta`` points per unit window area."""
        lam = plane_intensity_for_beta(beta, ScalingContext.build(orientation, camera))
        if kind == "regular":
            return cls(kind, orientation, camera, seed, grid_spacing=1 / math.sqrt(lam),
                       random_phase=random_phase)
        return cls(kind, orientation, camera, seed, plane_intensity=lam)

    @property
    def mean_gap(self) -> float:
        if self.kind == "regular":
            return self.grid_spacing
        return 1 / math.sqrt(self.plane_intensity)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "seed": self.seed,
            "orientation": self.orientation.to_dict(),
            "h": self.orientation.h,
            "camera": self.camera.to_dict(),
            "prng": PRNG_ID,
        }
        if self.kind == "regular":
            d["grid_spacing"] = self.grid_spacing
            d["random_phase"] = self.random_phase
        else:
            d["plane_intensity"] = self.plane_intensity
        return d


def plane_intensity_for_beta(beta: float, ctx: ScalingContext) -> float:
    """Plane intensity whose projection has mean image intensity ``beta``.

    The projected intensity is ``lambda * h^2 f / g^3 = (lambda / gamma) c^-2``.
    """
    return beta * ctx.gamma


def plane_frame(orientation: SurfaceOrientation, camera: CameraModel):
    """Anchor point and orthonormal in-plane axes.

    The anchor is the back-projection of the window centre; the first axis is
    the world x1 axis projected into the plane (x2 if the normal is along x1).
    """
    delta = orientation.delta
    anchor = backproject(camera.window.center, orientation, camera)
    ref = np.array([1.0, 0.0, 0.0]) if abs(delta[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ delta) * delta
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(delta, e1)
    return anchor, e1, e2


def plane_coordinates(points3d, frame) -> np.ndarray:
    anchor, e1, e2 = frame
    rel = np.asarray(points3d) - anchor
    return np.stack([rel @ e1, rel @ e2], axis=-1)


def _plane_box(spec: SimulationSpec, frame):
    corners = backproject(spec.camera.window.corners(), spec.orientation, spec.camera)
    uv = plane_coordinates(corners, frame)
    pad = MARGIN_GAPS * spec.mean_gap
    return uv.min(axis=0) - pad, uv.max(axis=0) + pad


def _lattice(lo, hi, spacing, phase):
    axes = []
    for k in range(2):
        i0 = math.floor((lo[k] - phase[k]) / spacing)
        i1 = math.ceil((hi[k] - phase[k]) / spacing)
        axes.append(phase[k] + spacing * np.arange(i0, i1 + 1))
    U, V = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([U.ravel(), V.ravel()])


def lattice_phase(spec: SimulationSpec, rng=None) -> np.ndarray:
    """Offset of the regular lattice from the plane anchor, in plane units."""
    if not spec.random_phase:
        return np.zeros(2)
    rng = rng if rng is not None else make_rng(spec.seed)
    return rng.uniform(0, spec.grid_spacing, 2)


def simulate_plane_points(spec: SimulationSpec):
    """Homogeneous points on the plane before projection, as ``(uv, frame)``."""
    if not spec.orientation.is_admissible(spec.camera):
        raise AdmissibilityError("orientation is not admissible over the window")
    rng = make_rng(spec.seed)
    frame = plane_frame(spec.orientation, spec.camera)
    lo, hi = _plane_box(spec, frame)
    if spec.kind == "regular":
        uv = _lattice(lo, hi, spec.grid_spacing, lattice_phase(spec, rng))
    else:
        area = float(np.prod(hi - lo))
        n = rng.poisson(spec.plane_intensity * area)
        uv = lo + rng.uniform(size=(n, 2)) * (hi - lo)
    return uv, frame


def simulate_on_plane(spec: SimulationSpec) -> PointPattern:
    """Simulate a homogeneous pattern on the plane and keep its in-window image."""
    uv, (anchor, e1, e2) = simulate_plane_points(spec)
    pts3d = anchor + uv[:, :1] * e1 + uv[:, 1:] * e2
    # Points of the dilated plane region that lie behind the camera never reach the window.
    in_front = pts3d[:, 2] < 0
    img = project_to_image(pts3d[in_front], spec.camera)
    img = img[spec.camera.window.contains(img)]
    if len(img) == 0:
        warnings.warn("simulation produced no points in the window; intensity too low?")
    return PointPattern(img, spec.camera.window, {"simulation": spec.to_dict()})


def thinning_dominator(ctx: ScalingContext) -> float:
    w = ctx.camera.window
    g1 = np.linspace(w.a1, w.a2, DOMINATOR_GRID)
    g2 = np.linspace(w.b1, w.b2, DOMINATOR_GRID)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    return DOMINATOR_SAFETY * float(np.max(perspective_c_inv2(np.stack([X1, X2], -1), ctx)))


def simulate_by_thinning(beta: float, ctx: ScalingContext, seed: int) -> PointPattern:
    """Inhomogeneous Poisson pattern with intensity ``beta * c^-2`` by thinning."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    rng = make_rng(seed)
    w = ctx.camera.window
    dom = thinning_dominator(ctx)
    n = rng.poisson(beta * dom * w.area())
    lo = np.array([w.a1, w.b1])
    span = np.array([w.width, w.height])
    cand = lo + rng.uniform(size=(n, 2)) * span
    keep = rng.uniform(size=n) < np.minimum(1.0, perspective_c_inv2(cand, ctx) / dom)
    meta = {
        "simulation": {
            "kind": "thinning",
            "beta": beta,
            "seed": seed,
            "orientation": ctx.orientation.to_dict(),
            "camera": ctx.camera.to_dict(),
            "prng": PRNG_ID,
        }
    }
    return PointPattern(cand[keep], w, meta)


def expected_count(region: ObservationWindow, beta: float, ctx: ScalingContext) -> float:
    """Expected number of points of intensity ``beta * c^-2`` in a sub-rectangle."""
    w = ctx.camera.window
    eps = 1e-12
    if not (region.a1 >= w.a1 - eps and region.a2 <= w.a2 + eps
            and region.b1 >= w.b1 - eps and region.b2 <= w.b2 + eps):
        raise ValueError("region must lie inside the observation window")
    return beta * integrate_over_window(lambda p: perspective_c_inv2(p, ctx), region)
