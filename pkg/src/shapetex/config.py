"""Flat ``section.key = value`` configuration for the command line.

A config file holds one ``key = value`` per line; ``#`` starts a comment.
Every key can also be given on the command line as ``--section.key VALUE``,
which takes precedence over the file.  Values are parsed and range-checked
here, and errors name the offending key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .geometry import ObservationWindow


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the key concerned."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _window(s: str) -> ObservationWindow:
    parts = [float(p) for p in s.replace(" ", "").split(",")]
    if len(parts) != 4:
        raise ValueError("expected four numbers a1,a2,b1,b2")
    return ObservationWindow(*parts)


def _optional_float(s: str):
    return None if s.strip().lower() in ("", "none", "inf") else float(s)


def _threshold(s: str):
    return "otsu" if s.strip().lower() == "otsu" else float(s)


def _choice(*names):
    def parse(s):
        v = s.strip().lower()
        if v not in names:
            raise ValueError(f"expected one of {', '.join(names)}, got {s!r}")
        return v
    return parse


def _positive(v):
    return None if v > 0 and math.isfinite(v) else "must be positive"


def _nonnegative(v):
    return None if v >= 0 else "must be nonnegative"


def _open_unit(v):
    return None if 0 < v < 1 else "must lie strictly between 0 and 1"


@dataclass(frozen=True)
class Option:
    key: str
    parse: Callable[[str], Any]
    default: Any
    help: str
    check: Callable[[Any], str | None] | None = None


OPTIONS = {o.key: o for o in [
    Option("camera.f", float, 0.98, "focal length in window units", _positive),
    Option("camera.window", _window, None,
           "observation window a1,a2,b1,b2 (simulate: -0.5,0.5,-0.5,0.5; estimate: the pattern's "
           "sidecar window, else -0.69,0.69,-0.5,0.5)"),
    Option("simulate.kind", _choice("regular", "poisson"), "poisson", "plane pattern: regular or poisson"),
    Option("simulate.method", _choice("plane", "thinning"), "plane",
           "simulate on the 3D plane and project, or thin in the image (poisson only)"),
    Option("simulate.eta1", float, 45.0, "slant in degrees",
           lambda v: None if 0 <= v < 90 else "must lie in [0, 90)"),
    Option("simulate.eta2", float, 0.0, "tilt in degrees"),
    Option("simulate.h", float, 20.0, "distance of the plane from the optical centre", _positive),
    Option("simulate.beta", float, 300.0, "mean number of image points per unit window area", _positive),
    Option("simulate.random_phase", _bool, True, "random lattice offset for regular patterns"),
    Option("simulate.render_px", int, 0,
           "if > 0, also render a tiled scene of this width in pixels (regular only)", _nonnegative),
    Option("simulate.grout", float, 0.04, "grout width as a fraction of the tile spacing", _open_unit),
    Option("preprocess.sigma", float, 1.5, "derivative-of-Gaussian scale in pixels",
           lambda v: None if v >= 0.5 else "must be at least 0.5"),
    Option("preprocess.threshold", _threshold, "otsu", "'otsu' or a fixed threshold in (0, 1)",
           lambda v: None if v == "otsu" or 0 < v < 1 else "must be 'otsu' or lie strictly between 0 and 1"),
    Option("preprocess.margin_x", int, 107, "pixels cropped from the left and right", _nonnegative),
    Option("preprocess.margin_y", int, 57, "pixels cropped from the top and bottom", _nonnegative),
    Option("preprocess.format", _choice("auto", "pgm", "png"), "auto", "input image format"),
    Option("detect.preset", _choice("tiling", "bricks"), "tiling",
           "search window preset: tiling 75x75 px (k1=37), bricks 55x55 px (k1=27)"),
    Option("detect.k1", int, None, "search window half-width in pixels (overrides the preset)", _positive),
    Option("detect.k2", float, 0.25, "neighbour threshold k2", _open_unit),
    Option("detect.segment_step", float, 0.5, "segment sampling step in pixels", _positive),
    Option("detect.cutoff", _optional_float, None, "max neighbour distance in pixels (none = all pairs)",
           lambda v: None if v is None or v > 0 else "must be positive or none"),
    Option("estimate.grid_eta1", int, 64, "slant grid size",
           lambda v: None if v >= 8 else "must be at least 8"),
    Option("estimate.grid_eta2", int, 128, "tilt grid size",
           lambda v: None if v >= 8 else "must be at least 8"),
    Option("estimate.refine_tol", float, 1e-6, "simplex tolerance on the objective", _positive),
    Option("estimate.max_iter", int, 400, "simplex iteration limit", _positive),
]}

PRESET_K1 = {"tiling": 37, "bricks": 27}

SECTIONS = {
    "simulate": ("camera", "simulate"),
    "preprocess": ("preprocess",),
    "detect": ("detect",),
    "estimate": ("camera", "estimate"),
    "pipeline": ("camera", "preprocess", "detect", "estimate"),
    "plot": (),
}


def keys_for(verb: str) -> list[str]:
    return [k for k in OPTIONS if k.split(".")[0] in SECTIONS[verb]]


def parse_value(key: str, raw: str):
    opt = OPTIONS.get(key)
    if opt is None:
        raise ConfigError(f"{key}: unknown configuration key")
    try:
        value = opt.parse(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if opt.check is not None and value is not None:
        msg = opt.check(value)
        if msg:
            raise ConfigError(f"{key}: {msg} (got {raw.strip()!r})")
    return value


def read_config_file(path) -> dict[str, str]:
    """Raw ``key -> value`` strings from a config file."""
    path = Path(path)
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in OPTIONS:
            raise ConfigError(f"{key}: unknown configuration key ({path}:{lineno})")
        out[key] = raw
    return out


def resolve(verb: str, file_values: dict[str, str], overrides: dict[str, str]) -> dict[str, Any]:
    """Typed values for ``verb``: defaults, then the file, then command-line overrides."""
    cfg = {}
    for key in keys_for(verb):
        raw = overrides.get(key, file_values.get(key))
        cfg[key] = OPTIONS[key].default if raw is None else parse_value(key, raw)
    if "detect.k1" in cfg and cfg["detect.k1"] is None:
        cfg["detect.k1"] = PRESET_K1[cfg["detect.preset"]]
    return cfg


def to_jsonable(cfg: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for k, v in sorted(cfg.items()):
        out[k] = [v.a1, v.a2, v.b1, v.b2] if isinstance(v, ObservationWindow) else v
    return out
