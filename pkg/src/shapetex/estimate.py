"""Composite-likelihood fit of the perspective scaling model.

For a pattern of ``n`` points the composite log-likelihood is

    n log(beta) - beta |D| + sum_i log c^-2(x_i),

maximized in ``beta`` by ``n / |D|``.  The slant/tilt estimate maximizes the
remaining profile term ``sum_i log c^-2(x_i)`` over the admissible region,
first on a coarse polar grid and then with a Nelder-Mead simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import AdmissibilityError, EmptyPatternError
from .geometry import (
    CameraModel,
    ObservationWindow,
    SurfaceOrientation,
    admissible_slant_bound,
    delta_from_angles,
    gamma_h2_grid,
)
from .pattern import PointPattern

TWO_PI = 2 * math.pi
# Below this slant the tilt is unidentifiable and reported as zero.
POLE_SLANT = 1e-6


@dataclass(frozen=True)
class EstimationConfig:
    camera: CameraModel
    grid_eta1: int = 64
    grid_eta2: int = 128
    refine_tol: float = 1e-6
    max_iter: int = 400

    def __post_init__(self):
        if self.grid_eta1 < 8 or self.grid_eta2 < 8:
            raise ValueError("grid counts must be at least 8")
        if not self.refine_tol > 0:
            raise ValueError("refine_tol must be positive")


@dataclass(frozen=True)
class EstimationResult:
    beta_hat: float
    eta1_hat: float
    eta2_hat: float
    objective: float
    n_points: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def orientation(self) -> SurfaceOrientation:
        return SurfaceOrientation(self.eta1_hat, self.eta2_hat)

    def to_dict(self) -> dict:
        d = self.diagnostics
        return {
            "beta_hat": self.beta_hat,
            "eta1_deg": math.degrees(self.eta1_hat),
            "eta2_deg": math.degrees(self.eta2_hat),
            "delta": [float(v) for v in delta_from_angles(self.eta1_hat, self.eta2_hat)],
            "objective": self.objective,
            "n_points": self.n_points,
            "grid_shape": list(d.get("grid_shape", [])),
            "converged": bool(d.get("converged", False)),
            "fronto_parallel": bool(d.get("fronto_parallel", False)),
            "loglik_shifted_constant": d.get("loglik_shifted_constant"),
            "loglik_poisson_constant": d.get("loglik_poisson_constant"),
            "refine_evaluations": d.get("refine_evaluations"),
        }


def beta_hat(n: int, window: ObservationWindow) -> float:
    """Maximum composite likelihood intensity ``n / |D|``."""
    if n < 1:
        raise EmptyPatternError("cannot estimate intensity from an empty pattern")
    return n / window.area()


def _profile(points, eta1, eta2, camera):
    """Profile objective for arrays of angles; -inf where not admissible."""
    eta1, eta2 = np.broadcast_arrays(np.asarray(eta1, float), np.asarray(eta2, float))
    gh2 = gamma_h2_grid(eta1, eta2, camera)
    d = delta_from_angles(eta1, eta2).reshape(-1, 3)
    g = camera.focal_length * d[:, 2:3] - d[:, :2] @ points.T
    ok = np.isfinite(gh2.ravel()) & np.all(g > 0, axis=1)
    out = np.full(d.shape[0], -np.inf)
    n = points.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        val = n * np.log(gh2.ravel() * camera.focal_length) - 3 * np.sum(np.log(g), axis=1)
    out[ok] = val[ok]
    return out.reshape(eta1.shape)


def profile_objective(pattern: PointPattern, eta, camera: CameraModel) -> float:
    """Sum over the pattern of ``log c^-2(x_i)`` at angles ``eta = (eta1, eta2)``.

    Raises AdmissibilityError if the angles are not admissible for the window
    or a point lies where the plane is not visible.
    """
    eta1, eta2 = eta
    if eta1 >= admissible_slant_bound(eta2, camera):
        raise AdmissibilityError(f"slant {math.degrees(eta1):.3f} deg exceeds the admissible bound")
    val = float(_profile(pattern.points, eta1, eta2, camera))
    if not np.isfinite(val):
        raise AdmissibilityError("pattern contains points outside the admissible image region")
    return val


def likelihood_constants(n: int, area: float) -> dict:
    """The eta-free part of the composite log-likelihood at ``beta_hat``.

    Both the expression ``n log(n/|D| - 1)`` and the Poisson profile constant
    ``n log(n/|D|) - n`` are returned; neither affects the argmax.
    """
    rate = n / area
    shifted = n * math.log(rate - 1) if rate > 1 else None
    return {"shifted": shifted, "poisson": n * math.log(rate) - n}


def _to_polar(p, q):
    eta1 = math.hypot(p, q)
    eta2 = math.atan2(q, p) % TWO_PI if eta1 > 0 else 0.0
    return eta1, eta2


def estimate_orientation(pattern: PointPattern, config: EstimationConfig) -> EstimationResult:
    """Grid search plus simplex refinement of the profile composite likelihood."""
    n = len(pattern)
    if n == 0:
        raise EmptyPatternError("cannot estimate orientation from an empty pattern")
    camera = config.camera
    pts = pattern.points
    if not np.all(camera.window.contains(pts)):
        raise ValueError("pattern has points outside the estimation window")
    b_hat = beta_hat(n, camera.window)

    eta2_axis = np.arange(config.grid_eta2) * (TWO_PI / config.grid_eta2)
    u_max = float(np.max(admissible_slant_bound(eta2_axis, camera)))
    eta1_axis = np.arange(config.grid_eta1) * (u_max / config.grid_eta1)
    E1, E2 = np.meshgrid(eta1_axis, eta2_axis, indexing="ij")
    grid = _profile(pts, E1, E2, camera)
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    grid_best = float(grid[i, j])

    # Refine in Cartesian slant-vector coordinates (eta1 cos eta2, eta1 sin eta2),
    # which are smooth through the fronto-parallel pole.
    def neg(v):
        e1, e2 = _to_polar(v[0], v[1])
        val = _profile(pts, e1, e2, camera)
        return -float(val) if np.isfinite(val) else np.inf

    e1_0, e2_0 = eta1_axis[i], eta2_axis[j]
    start = np.array([e1_0 * math.cos(e2_0), e1_0 * math.sin(e2_0)])
    step = u_max / config.grid_eta1
    simplex = np.array([start, start + [step, 0.0], start + [0.0, step]])
    res = minimize(
        neg,
        start,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": 1e-9,
            "fatol": config.refine_tol,
            "maxiter": config.max_iter,
        },
    )
    if np.isfinite(res.fun) and -res.fun >= grid_best:
        eta1, eta2 = _to_polar(*res.x)
        objective = -float(res.fun)
    else:
        eta1, eta2, objective = float(e1_0), float(e2_0), grid_best

    fronto = eta1 < POLE_SLANT
    if fronto:
        eta1, eta2 = 0.0, 0.0
    consts = likelihood_constants(n, camera.window.area())
    diagnostics = {
        "grid_shape": [config.grid_eta1, config.grid_eta2],
        "grid_best": grid_best,
        "grid_argmax_deg": [math.degrees(e1_0), math.degrees(e2_0)],
        "grid_admissible_cells": int(np.sum(np.isfinite(grid))),
        "converged": bool(res.success),
        "refine_evaluations": int(res.nfev),
        "refine_iterations": int(res.nit),
        "fronto_parallel": bool(fronto),
        "loglik_shifted_constant": None if consts["shifted"] is None else consts["shifted"] + objective,
        "loglik_poisson_constant": consts["poisson"] + objective,
    }
    return EstimationResult(b_hat, eta1, eta2, objective, n, diagnostics)
