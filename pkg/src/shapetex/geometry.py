"""Pinhole-camera geometry of a textured plane.

Image points ``x = (x1, x2)`` live in a normalized observation window and are
identified with rays ``X = (x1, x2, -f)``.  A plane with unit normal ``delta``
(pointing towards the camera) and distance ``h`` from the optical centre is
parametrized by a slant ``eta1`` and a tilt ``eta2``.  A homogeneous texture on
the plane appears in the image with density

    h**2 * f / g(x)**3,    g(x) = -<delta, X> > 0,

and, once normalized to conserve the window area, this density is the squared
inverse scaling function ``c^-2`` of a locally scaled point process.

All angles are in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import AdmissibilityError, QuadratureError

__all__ = [
    "ObservationWindow",
    "CameraModel",
    "SurfaceOrientation",
    "ScalingContext",
    "focal_from_fov",
    "delta_from_angles",
    "ray",
    "backproject",
    "project_to_image",
    "surface_element_density",
    "gamma_numeric",
    "gamma_closed_form",
    "gamma_symmetric",
    "gamma_general_uncorrected",
    "closed_form_status",
    "normalizing_constant",
    "perspective_c_inv2",
    "perspective_c_inv",
    "scaled_distance_perspective",
    "exponential_c_inv",
    "scaled_distance_exponential",
    "admissible_slant_bound",
    "window_quadrature",
    "integrate_over_window",
]

# Relative disagreement above which a closed form is not trusted.
CLOSED_FORM_RTOL = 1e-6
# Denominators below this use the continuous limit of the scaled distance.
DEGENERATE_DIRECTION = 1e-12


@dataclass(frozen=True)
class ObservationWindow:
    """Axis-aligned rectangle ``[a1, a2] x [b1, b2]`` in window units."""

    a1: float
    a2: float
    b1: float
    b2: float

    def __post_init__(self):
        if not (self.a1 < self.a2 and self.b1 < self.b2):
            raise ValueError(
                f"degenerate window [{self.a1}, {self.a2}] x [{self.b1}, {self.b2}]"
            )

    @classmethod
    def symmetric(cls, width: float = 1.0, height: float = 1.0) -> "ObservationWindow":
        """Window centred on the optical axis."""
        return cls(-width / 2, width / 2, -height / 2, height / 2)

    @property
    def width(self) -> float:
        return self.a2 - self.a1

    @property
    def height(self) -> float:
        return self.b2 - self.b1

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.a1 + self.a2) / 2, (self.b1 + self.b2) / 2])

    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> np.ndarray:
        """The four corners as a ``(4, 2)`` array, ordered (a1,b1), (a1,b2), (a2,b1), (a2,b2)."""
        return np.array(
            [[self.a1, self.b1], [self.a1, self.b2], [self.a2, self.b1], [self.a2, self.b2]]
        )

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return (
            (p[:, 0] >= self.a1)
            & (p[:, 0] <= self.a2)
            & (p[:, 1] >= self.b1)
            & (p[:, 1] <= self.b2)
        )

    def shrink(self, margin: float) -> "ObservationWindow":
        return ObservationWindow(
            self.a1 + margin, self.a2 - margin, self.b1 + margin, self.b2 - margin
        )

    def to_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "b1": self.b1, "b2": self.b2}

    @classmethod
    def from_dict(cls, d) -> "ObservationWindow":
        return cls(float(d["a1"]), float(d["a2"]), float(d["b1"]), float(d["b2"]))


def focal_from_fov(phi_c: float, window: ObservationWindow) -> float:
    """Focal length for a horizontal field of view ``phi_c`` spanning the window width."""
    if not 0.0 < phi_c < math.pi:
        raise ValueError(f"field of view must lie in (0, pi), got {phi_c}")
    return (window.width / 2) / math.tan(phi_c / 2)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: focal length plus the observation window it images.

    ``field_of_view`` is kept only as provenance; ``focal_length`` is authoritative.
    """

    focal_length: float
    window: ObservationWindow = field(default_factory=ObservationWindow.symmetric)
    field_of_view: float | None = None

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValueError(f"focal length must be positive, got {self.focal_length}")

    @classmethod
    def from_fov(cls, phi_c: float, window: ObservationWindow) -> "CameraModel":
        return cls(focal_from_fov(phi_c, window), window, phi_c)

    def with_window(self, window: ObservationWindow) -> "CameraModel":
        return CameraModel(self.focal_length, window, self.field_of_view)

    def to_dict(self) -> dict:
        d = {"f": self.focal_length, "window": self.window.to_dict()}
        if self.field_of_view is not None:
            d["fov_deg"] = math.degrees(self.field_of_view)
        return d


def delta_from_angles(eta1, eta2) -> np.ndarray:
    """Unit plane normal for slant ``eta1`` and tilt ``eta2`` (broadcasts)."""
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    s = np.sin(eta1)
    return np.stack([s * np.cos(eta2), s * np.sin(eta2), np.cos(eta1) + 0 * eta2], axis=-1)


@dataclass(frozen=True)
class SurfaceOrientation:
    """Slant/tilt of the textured plane and its distance from the camera."""

    eta1: float
    eta2: float
    h: float = 1.0

    def __post_init__(self):
        if self.eta1 < 0:
            raise ValueError(f"slant must be nonnegative, got {self.eta1}")
        if not self.h > 0:
            raise ValueError(f"plane distance must be positive, got {self.h}")
        object.__setattr__(self, "eta2", float(self.eta2) % (2 * math.pi))

    @classmethod
    def from_degrees(cls, eta1_deg: float, eta2_deg: float, h: float = 1.0):
        return cls(math.radians(eta1_deg), math.radians(eta2_deg), h)

    @property
    def delta(self) -> np.ndarray:
        return delta_from_angles(self.eta1, self.eta2)

    def with_h(self, h: float) -> "SurfaceOrientation":
        return SurfaceOrientation(self.eta1, self.eta2, h)

    def is_admissible(self, camera: CameraModel) -> bool:
        """True when every ray through the window hits the plane in front of the camera."""
        return bool(np.all(_g(camera.window.corners(), self.delta, camera.focal_length) > 0))

    def to_dict(self) -> dict:
        return {
            "eta1_deg": math.degrees(self.eta1),
            "eta2_deg": math.degrees(self.eta2),
            "delta": [float(v) for v in self.delta],
        }


def ray(x, camera: CameraModel) -> np.ndarray:
    """Ray ``(x1, x2, -f)`` through image point(s) ``x``."""
    x = np.asarray(x, dtype=float)
    f = np.full(x.shape[:-1] + (1,), -camera.focal_length)
    return np.concatenate([x, f], axis=-1)


def _g(x, delta, f):
    """``-<delta, X>`` for image points ``x``; positive exactly where admissible."""
    x = np.asarray(x, dtype=float)
    return f * delta[..., 2] - delta[..., 0] * x[..., 0] - delta[..., 1] * x[..., 1]


def _checked_g(x, orientation: SurfaceOrientation, camera: CameraModel):
    g = _g(x, orientation.delta, camera.focal_length)
    if np.any(g <= 0):
        bad = np.asarray(x, dtype=float).reshape(-1, 2)[np.ravel(g) <= 0]
        raise AdmissibilityError(
            f"{len(bad)} point(s) see the plane edge-on or from behind, e.g. {bad[0].tolist()}"
        )
    return g


def backproject(x, orientation: SurfaceOrientation, camera: CameraModel) -> np.ndarray:
    """Intersection of the ray through ``x`` with the plane."""
    g = _checked_g(x, orientation, camera)
    return (orientation.h / g)[..., None] * ray(x, camera)


def project_to_image(points, camera: CameraModel) -> np.ndarray:
    """Central projection of 3D point(s) in front of the camera onto the image plane."""
    p = np.asarray(points, dtype=float)
    z = p[..., 2]
    if np.any(z >= 0):
        raise ValueError("cannot project points with X3 >= 0 (at or behind the camera)")
    return -camera.focal_length * p[..., :2] / z[..., None]


def surface_element_density(x, orientation: SurfaceOrientation, camera: CameraModel):
    """Plane area per unit image area at ``x``: ``h^2 f / g^3``."""
    g = _checked_g(x, orientation, camera)
    return orientation.h**2 * camera.focal_length / g**3


# --------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def _gauss_legendre(order):
    return np.polynomial.legendre.leggauss(order)


def _panel_nodes(lo, hi, panels, order):
    t, w = _gauss_legendre(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def window_quadrature(window: ObservationWindow, nodes_per_axis: int = 256, order: int = 16):
    """Tensor composite Gauss-Legendre rule on a window.

    Returns ``(points, weights)`` with ``points`` of shape ``(n, n, 2)``.
    ``nodes_per_axis`` must be a multiple of ``order``.
    """
    if nodes_per_axis % order:
        raise ValueError("nodes_per_axis must be a multiple of order")
    panels = nodes_per_axis // order
    u, wu = _panel_nodes(window.a1, window.a2, panels, order)
    v, wv = _panel_nodes(window.b1, window.b2, panels, order)
    U, V = np.meshgrid(u, v, indexing="ij")
    return np.stack([U, V], axis=-1), np.outer(wu, wv)


def integrate_over_window(func, window: ObservationWindow, nodes_per_axis: int = 256) -> float:
    """Integrate a vectorized ``func(points)`` over the window."""
    pts, w = window_quadrature(window, nodes_per_axis)
    return float(np.sum(func(pts) * w))


def _adaptive_window_integral(func, window, rtol, max_nodes=2048):
    n = 32
    prev = integrate_over_window(func, window, n)
    while n < max_nodes:
        n *= 2
        cur = integrate_over_window(func, window, n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    raise QuadratureError(
        f"window integral did not converge to rtol={rtol} with {max_nodes}^2 nodes"
    )


# --------------------------------------------------------------------------
# normalizing constant


def gamma_numeric(orientation: SurfaceOrientation, camera: CameraModel, rtol: float = 1e-9) -> float:
    """Normalizing constant by quadrature: ``|D| / integral_D density``.

    This is the reference value against which the closed forms are checked.
    """
    if not orientation.is_admissible(camera):
        raise AdmissibilityError("orientation is not admissible over the window")
    total = _adaptive_window_integral(
        lambda p: surface_element_density(p, orientation, camera), camera.window, rtol
    )
    return camera.window.area() / total


def _gamma_h2_general(delta, f, window):
    # gamma * h^2 = 2 * prod(g at corners) / (f * (g11 + g22)); broadcasts over delta.
    c = window.corners()
    g = [_g(c[k], delta, f) for k in range(4)]
    return 2.0 * g[0] * g[1] * g[2] * g[3] / (f * (g[0] + g[3]))


def gamma_closed_form(orientation: SurfaceOrientation, camera: CameraModel) -> float:
    """Closed-form normalizing constant for an arbitrary rectangular window."""
    if not orientation.is_admissible(camera):
        raise AdmissibilityError("orientation is not admissible over the window")
    d = orientation.delta
    return float(_gamma_h2_general(d, camera.focal_length, camera.window)) / orientation.h**2


def gamma_symmetric(orientation: SurfaceOrientation, camera: CameraModel) -> float:
    """Product formula for ``D = [-a/2, a/2] x [-1/2, 1/2]``."""
    w = camera.window
    a = w.width
    if not (np.isclose(w.a1, -a / 2) and np.isclose(w.b1, -0.5) and np.isclose(w.b2, 0.5)):
        raise ValueError("symmetric formula needs a window of the form [-a/2,a/2] x [-1/2,1/2]")
    d1, d2, d3 = orientation.delta
    f, h = camera.focal_length, orientation.h
    if d3 <= 0:
        raise AdmissibilityError("formula requires delta3 > 0")
    return (
        (a * d1 - 2 * f * d3 - d2)
        * (a * d1 - 2 * f * d3 + d2)
        * (a * d1 + 2 * f * d3 - d2)
        * (a * d1 + 2 * f * d3 + d2)
        / (16 * h**2 * f**2 * d3)
    )


def gamma_general_uncorrected(orientation: SurfaceOrientation, camera: CameraModel) -> float:
    """General-window product formula with linear factor ``f delta3`` instead of ``2 f delta3``.

    Disagrees with quadrature; see :func:`closed_form_status`.
    """
    w = camera.window
    d1, d2, d3 = orientation.delta
    f, h = camera.focal_length, orientation.h
    lead = 2 / (h**2 * f) / (-(w.a1 + w.a2) * d1 - (w.b1 + w.b2) * d2 + f * d3)
    return (
        lead
        * (w.a1 * d1 + w.b1 * d2 - f * d3)
        * (w.a1 * d1 + w.b2 * d2 - f * d3)
        * (w.a2 * d1 + w.b1 * d2 - f * d3)
        * (w.a2 * d1 + w.b2 * d2 - f * d3)
    )


_CHECK_WINDOWS = (
    ObservationWindow.symmetric(1.0, 1.0),
    ObservationWindow.symmetric(1.38, 1.0),
    ObservationWindow(-0.3, 0.9, -0.6, 0.2),
)
_CHECK_ANGLES_DEG = ((0.0, 0.0), (20.0, 10.0), (35.0, 200.0), (45.0, 0.0), (30.0, 45.0))


@lru_cache(maxsize=1)
def closed_form_status() -> dict:
    """Check each closed form against quadrature on a fixed panel of cases.

    Returns a mapping ``name -> {"verified": bool, "max_rel_err": float}``.
    Unverified forms are never used for computation.
    """
    forms = {
        "general": gamma_closed_form,
        "symmetric": gamma_symmetric,
        "general_uncorrected": gamma_general_uncorrected,
    }
    errs = {name: 0.0 for name in forms}
    for window in _CHECK_WINDOWS:
        camera = CameraModel(0.98, window)
        for e1, e2 in _CHECK_ANGLES_DEG:
            o = SurfaceOrientation.from_degrees(e1, e2)
            ref = gamma_numeric(o, camera)
            for name, fn in forms.items():
                try:
                    val = fn(o, camera)
                except ValueError:
                    continue  # form does not apply to this window
                errs[name] = max(errs[name], float(abs(val - ref) / ref))
    return {
        name: {"verified": bool(err <= CLOSED_FORM_RTOL), "max_rel_err": float(err)}
        for name, err in errs.items()
    }


def normalizing_constant(orientation: SurfaceOrientation, camera: CameraModel) -> float:
    """Closed form when it has been verified against quadrature, quadrature otherwise."""
    if closed_form_status()["general"]["verified"]:
        return gamma_closed_form(orientation, camera)
    return gamma_numeric(orientation, camera)


def gamma_h2_grid(eta1, eta2, camera: CameraModel) -> np.ndarray:
    """``gamma * h^2`` over arrays of angles; NaN where not admissible."""
    eta1, eta2 = np.broadcast_arrays(np.asarray(eta1, float), np.asarray(eta2, float))
    d = delta_from_angles(eta1, eta2)
    f = camera.focal_length
    ok = np.ones(eta1.shape, dtype=bool)
    for c in camera.window.corners():
        ok &= _g(c, d, f) > 0
    if closed_form_status()["general"]["verified"]:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _gamma_h2_general(d, f, camera.window)
    else:
        out = np.full(eta1.shape, np.nan)
        for idx in zip(*np.nonzero(ok)):
            out[idx] = gamma_numeric(SurfaceOrientation(eta1[idx], eta2[idx]), camera)
    return np.where(ok, out, np.nan)


# --------------------------------------------------------------------------
# perspective scaling


@dataclass(frozen=True)
class ScalingContext:
    """Orientation, camera and the cached normalizing constant."""

    orientation: SurfaceOrientation
    camera: CameraModel
    gamma: float

    @classmethod
    def build(cls, orientation: SurfaceOrientation, camera: CameraModel) -> "ScalingContext":
        if not orientation.is_admissible(camera):
            raise AdmissibilityError("orientation is not admissible over the window")
        return cls(orientation, camera, normalizing_constant(orientation, camera))

    def g(self, x):
        return _checked_g(x, self.orientation, self.camera)


def perspective_c_inv2(x, ctx: ScalingContext):
    """Area scaling ``c^-2(x) = gamma h^2 f / g(x)^3``; integrates to ``|D|`` over the window."""
    g = ctx.g(x)
    return ctx.gamma * ctx.orientation.h**2 * ctx.camera.focal_length / g**3


def perspective_c_inv(x, ctx: ScalingContext):
    """Length scaling ``c^-1(x)``."""
    return np.sqrt(perspective_c_inv2(x, ctx))


def scaled_distance_perspective(xi, xj, ctx: ScalingContext):
    """Locally scaled distance between image points under perspective scaling.

    Equals the integral of ``c^-1`` along the segment ``[xi, xj]``.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    gi, gj = ctx.g(xi), ctx.g(xj)
    d = np.linalg.norm(xj - xi, axis=-1)
    k = np.sqrt(ctx.gamma * ctx.camera.focal_length) * ctx.orientation.h
    # 2 (gi^-1/2 - gj^-1/2) / (gj - gi), rewritten without the cancelling difference.
    factor = 2.0 / (np.sqrt(gi * gj) * (np.sqrt(gi) + np.sqrt(gj)))
    # Near-parallel segments: the continuous limit, c^-1 at the midpoint.
    flat = np.abs(gj - gi) < DEGENERATE_DIRECTION
    if np.any(flat):
        gm = ctx.g((xi + xj) / 2)
        factor = np.where(flat, gm**-1.5, factor)
    return d * k * factor


# --------------------------------------------------------------------------
# exponential scaling


def _exp_integral(t, lo, hi):
    """Integral of exp(-2 t s) ds over [lo, hi]."""
    if t == 0:
        return hi - lo
    return -math.exp(-2 * t * lo) * math.expm1(-2 * t * (hi - lo)) / (2 * t)


def _exponential_norm(eta, window):
    # c(x) = k exp(eta . x); area conservation fixes k^-2 = |D| / integral exp(-2 eta . x)
    total = _exp_integral(eta[0], window.a1, window.a2) * _exp_integral(eta[1], window.b1, window.b2)
    return math.sqrt(window.area() / total)


def exponential_c_inv(x, eta, window: ObservationWindow):
    """``c^-1(x)`` for normalized exponential scaling ``c(x) ~ exp(eta . x)``."""
    eta = np.asarray(eta, dtype=float)
    x = np.asarray(x, dtype=float)
    return _exponential_norm(eta, window) * np.exp(-(x @ eta))


def scaled_distance_exponential(xi, xj, eta, window: ObservationWindow):
    """Closed-form locally scaled distance under exponential scaling."""
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    d = np.linalg.norm(xj - xi, axis=-1)
    q = (xj - xi) @ eta
    ci = exponential_c_inv(xi, eta, window)
    flat = np.abs(q) < DEGENERATE_DIRECTION
    safe_q = np.where(flat, 1.0, q)
    # |c^-1(xi) - c^-1(xj)| / |q| with c^-1(xj) = c^-1(xi) exp(-q)
    factor = np.abs(-ci * np.expm1(-safe_q) / safe_q)
    if np.any(flat):
        factor = np.where(flat, exponential_c_inv((xi + xj) / 2, eta, window), factor)
    return d * factor


# --------------------------------------------------------------------------


def admissible_slant_bound(eta2, camera: CameraModel):
    """Supremum of admissible slants for a given tilt."""
    eta2 = np.asarray(eta2, dtype=float)
    c = camera.window.corners()
    m = np.max(
        c[:, 0][:, None] * np.cos(eta2).ravel()[None, :]
        + c[:, 1][:, None] * np.sin(eta2).ravel()[None, :],
        axis=0,
    ).reshape(eta2.shape)
    u = np.where(m > 0, np.arctan2(camera.focal_length, np.where(m > 0, m, 1.0)), math.pi / 2)
    return float(u) if u.ndim == 0 else u
