"""Point patterns in window coordinates and their CSV/JSON serialization."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ObservationWindow


@dataclass(frozen=True)
class PointPattern:
    """A finite set of distinct points inside an observation window."""

    points: np.ndarray
    window: ObservationWindow
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not np.all(self.window.contains(pts)):
            n_out = int(np.sum(~self.window.contains(pts)))
            raise ValueError(f"{n_out} point(s) lie outside the window")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("point pattern contains duplicate points")

    def __len__(self):
        return len(self.points)

    def transformed(self, func, window: ObservationWindow | None = None) -> "PointPattern":
        """Pattern with ``func`` applied to the ``(n, 2)`` point array."""
        return PointPattern(func(self.points.copy()), window or self.window, dict(self.metadata))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x1,x2\n")
        for x1, x2 in self.points:
            buf.write(f"{x1:.17g},{x2:.17g}\n")
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"window": self.window.to_dict(), "n_points": len(self), **self.metadata}


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_pattern(pattern: PointPattern, path) -> Path:
    """Write ``path`` (CSV) and its JSON metadata sidecar; returns the sidecar path."""
    path = Path(path)
    path.write_text(pattern.to_csv())
    side = sidecar_path(path)
    side.write_text(json.dumps(pattern.sidecar(), indent=2, sort_keys=True) + "\n")
    return side


def parse_csv(text: str) -> np.ndarray:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != "x1,x2":
        raise ValueError("pattern CSV must start with the header 'x1,x2'")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected two columns, got {ln!r}")
        rows.append((float(parts[0]), float(parts[1])))
    return np.array(rows, dtype=float).reshape(-1, 2)


def read_pattern(path, window: ObservationWindow | None = None) -> PointPattern:
    """Read a pattern CSV; the window comes from the sidecar unless given."""
    path = Path(path)
    pts = parse_csv(path.read_text())
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    if window is None:
        if "window" not in meta:
            raise ValueError(f"no window given and no sidecar with a window next to {path}")
        window = ObservationWindow.from_dict(meta["window"])
    meta = {k: v for k, v in meta.items() if k not in ("window", "n_points")}
    return PointPattern(pts, window, meta)
