"""From a grayscale photograph to a probability map of texture-element locations.

The chain is: derivative-of-Gaussian gradient magnitude, a threshold that
turns it into a boundary mask, the Euclidean distance to the nearest boundary
pixel, and a crop plus rescaling to ``[0, 1]``.  Texture elements are the
regions enclosed by boundaries, so their interiors become peaks of the map.

Pixel ``(row, col)`` has its centre at window coordinates

    x1 = a1 + (col + 0.5) * p,    x2 = b2 - (row + 0.5) * p,

with square pixels of side ``p``; row 0 is the top of the image.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, ImageFormatError
from .geometry import ObservationWindow

LUMA = np.array([0.299, 0.587, 0.114])
OTSU_BINS = 256
DEFAULT_SIGMA = 1.5
# Default crop, taking 1280x960 photographs down to 1066x846.
DEFAULT_MARGINS = (107, 57)
_ASPECT_RTOL = 1e-9


@dataclass(frozen=True)
class GrayImage:
    """Row-major intensities in ``[0, 1]``; shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"expected a nonempty 2D array, got shape {px.shape}")
        if not (np.all(np.isfinite(px)) and px.min() >= 0 and px.max() <= 1):
            raise ValueError("pixel values must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def default_window(width: int, height: int) -> ObservationWindow:
    """Centred window of height 1 with the image's aspect ratio."""
    half = 0.5 * width / height
    return ObservationWindow(-half, half, -0.5, 0.5)


@dataclass(frozen=True)
class ProbabilityMap:
    """Map ``Y`` on pixel centres together with the window it covers."""

    grid: np.ndarray
    window: ObservationWindow
    params: dict | None = None

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("probability map must be a nonempty 2D array")
        if not (np.all(np.isfinite(grid)) and grid.min() >= 0 and grid.max() <= 1):
            raise ValueError("probability map values must lie in [0, 1]")
        h, w = grid.shape
        if not math.isclose(self.window.width / w, self.window.height / h, rel_tol=_ASPECT_RTOL):
            raise ValueError("window aspect ratio does not match the pixel grid")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "params", dict(self.params or {}))

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def pixel_size(self) -> float:
        return self.window.width / self.width

    def to_window(self, rc) -> np.ndarray:
        """Window coordinates of (possibly fractional) ``(row, col)`` positions."""
        rc = np.asarray(rc, dtype=float)
        p = self.pixel_size
        x1 = self.window.a1 + (rc[..., 1] + 0.5) * p
        x2 = self.window.b2 - (rc[..., 0] + 0.5) * p
        return np.stack([x1, x2], axis=-1)

    def to_pixel(self, x) -> np.ndarray:
        """Fractional ``(row, col)`` of window points; inverse of :meth:`to_window`."""
        x = np.asarray(x, dtype=float)
        p = self.pixel_size
        col = (x[..., 0] - self.window.a1) / p - 0.5
        row = (self.window.b2 - x[..., 1]) / p - 0.5
        return np.stack([row, col], axis=-1)

    def sidecar(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "window": self.window.to_dict(),
            "pixel_size": self.pixel_size,
            "pixel_to_window": "x1 = a1 + (col + 0.5) * pixel_size; x2 = b2 - (row + 0.5) * pixel_size",
            "params": self.params,
        }


# -- file formats -----------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data: bytes, count: int, start: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out, pos = [], start
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header", pos)
        tok = m.group(1)
        if b"#" in tok:
            tok = tok.split(b"#", 1)[0]
        if not tok.isdigit():
            raise ImageFormatError(f"expected an integer in the PGM header, got {tok[:16]!r}", m.start(1))
        out.append(int(tok))
        pos = m.start(1) + len(tok)
    return out, pos


def decode_pgm(data: bytes) -> GrayImage:
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"not a PGM file (magic {magic!r})", 0)
    (width, height, maxval), pos = _header_tokens(data, 3, 2)
    if width < 1 or height < 1:
        raise ImageFormatError("image dimensions must be positive", pos)
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"maxval {maxval} out of range", pos)
    n = width * height
    if magic == b"P5":
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise ImageFormatError("missing whitespace after PGM header", pos)
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        if len(data) - pos < need:
            raise ImageFormatError(f"expected {need} bytes of pixel data, found {len(data) - pos}", len(data))
        vals = np.frombuffer(data, dtype=dtype, count=n, offset=pos).astype(np.int64)
    else:
        body = data[pos:]
        toks = list(re.finditer(rb"\S+", re.sub(rb"#[^\n]*", lambda m: b" " * len(m.group()), body)))
        if len(toks) < n:
            raise ImageFormatError(f"expected {n} samples, found {len(toks)}", len(data))
        vals = np.empty(n, dtype=np.int64)
        for k, m in enumerate(toks[:n]):
            if not m.group().isdigit():
                raise ImageFormatError(f"bad sample {m.group()[:16]!r}", pos + m.start())
            vals[k] = int(m.group())
    if vals.max(initial=0) > maxval:
        k = int(np.argmax(vals > maxval))
        raise ImageFormatError(f"sample {k} exceeds maxval {maxval}", pos)
    return GrayImage(vals.reshape(height, width) / maxval)


def encode_pgm(pixels: np.ndarray, bits: int = 8) -> bytes:
    """Binary PGM (P5) of values in ``[0, 1]`` at 8 or 16 bits per sample."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    px = np.asarray(pixels, dtype=float)
    maxval = (1 << bits) - 1
    q = np.round(np.clip(px, 0, 1) * maxval)
    body = q.astype(">u2" if bits == 16 else "u1").tobytes()
    return f"P5\n{px.shape[1]} {px.shape[0]}\n{maxval}\n".encode() + body


def _decode_png(path: Path) -> GrayImage:
    try:
        from PIL import Image
    except ImportError as exc:
        raise ImageFormatError("PNG input needs Pillow; install the 'png' extra") from exc
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=float) / 65535.0
            elif mode == "L":
                arr = np.asarray(im, dtype=float) / 255.0
            elif mode in ("LA", "1"):
                arr = np.asarray(im.convert("L"), dtype=float) / 255.0
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=float) / 255.0
                arr = rgb @ LUMA
    except OSError as exc:
        raise ImageFormatError(f"cannot decode PNG {path}: {exc}") from exc
    return GrayImage(np.clip(arr, 0, 1))


def load_image(path, format: str | None = None) -> GrayImage:
    """Load a PGM (P2/P5, 8 or 16 bit) or, with Pillow installed, a PNG."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "pgm":
        return decode_pgm(path.read_bytes())
    if fmt == "png":
        return _decode_png(path)
    raise ImageFormatError(f"unsupported image format {fmt!r}")


def save_image(img: GrayImage, path, bits: int = 8) -> None:
    Path(path).write_bytes(encode_pgm(img.pixels, bits))


def save_probability_map(pmap: ProbabilityMap, path) -> Path:
    """16-bit PGM with value ``round(65535 Y)`` and a JSON sidecar; returns the sidecar path."""
    path = Path(path)
    path.write_bytes(encode_pgm(pmap.grid, 16))
    side = path.with_suffix(".json")
    side.write_text(json.dumps(pmap.sidecar(), indent=2, sort_keys=True) + "\n")
    return side


def load_probability_map(path) -> ProbabilityMap:
    path = Path(path)
    img = decode_pgm(path.read_bytes())
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
        window = ObservationWindow.from_dict(meta["window"])
        params = meta.get("params", {})
    else:
        window, params = default_window(img.width, img.height), {}
    return ProbabilityMap(img.pixels, window, params)


# -- processing -------------------------------------------------------------

def gradient_magnitude(img: GrayImage, sigma: float = DEFAULT_SIGMA) -> GrayImage:
    """Derivative-of-Gaussian gradient magnitude, rescaled so its max is 1.

    Kernels are truncated at 4 sigma; borders are reflected.  A constant
    image gives all zeros.
    """
    if not sigma >= 0.5:
        raise ValueError(f"sigma must be at least 0.5 px, got {sigma}")
    px = img.pixels
    gy = ndimage.gaussian_filter(px, sigma, order=(1, 0), mode="reflect", truncate=4.0)
    gx = ndimage.gaussian_filter(px, sigma, order=(0, 1), mode="reflect", truncate=4.0)
    mag = np.hypot(gx, gy)
    top = mag.max()
    # round-off on flat images leaves ~1e-17 noise; treat it as no edge at all
    if top <= 1e-12:
        return GrayImage(np.zeros_like(px))
    return GrayImage(mag / top)


def otsu_threshold(values, bins: int = OTSU_BINS) -> float:
    """Otsu threshold of values in ``[0, 1]`` on a fixed ``bins``-bin histogram.

    Returns the upper edge of the last bin of the lower class, so the mask
    ``values >= t`` is exactly the upper class.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0 or v.min() == v.max():
        raise DegenerateInputError("cannot threshold a constant image")
    hist, edges = np.histogram(v, bins=bins, range=(0.0, 1.0))
    p = hist / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)
    m0 = np.cumsum(p * centers)
    mt = m0[-1]
    w1 = 1 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    k = int(np.argmax(between))
    return float(edges[k + 1])


def threshold_boundaries(mag: GrayImage, method: str = "otsu", t: float | None = None) -> np.ndarray:
    """Boolean boundary mask ``mag >= threshold``."""
    if method == "otsu":
        t = otsu_threshold(mag.pixels)
    elif method == "fixed":
        if t is None or not 0 < t < 1:
            raise ValueError("fixed threshold must lie strictly between 0 and 1")
    else:
        raise ValueError(f"unknown threshold method {method!r}")
    return mag.pixels >= t


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance in pixels from each pixel to the nearest true pixel."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateInputError("boundary mask is empty")
    # scipy measures the distance to the nearest zero, so pass the complement
    return ndimage.distance_transform_edt(~mask)


def _margins(margin_px):
    if np.isscalar(margin_px):
        mx = my = int(margin_px)
    else:
        mx, my = (int(m) for m in margin_px)
    if mx < 0 or my < 0:
        raise ValueError("margins must be nonnegative")
    return mx, my


def to_probability_map(dist, window: ObservationWindow | None = None, margin_px=0,
                       params: dict | None = None) -> ProbabilityMap:
    """Crop ``margin_px`` (one int, or ``(horizontal, vertical)``) and scale to max 1.

    ``window`` covers the uncropped image and defaults to :func:`default_window`;
    the returned map carries the matching sub-window of the crop.
    """
    d = np.asarray(dist, dtype=float)
    h, w = d.shape
    window = window or default_window(w, h)
    mx, my = _margins(margin_px)
    if 2 * mx >= w or 2 * my >= h:
        raise ValueError(f"margins ({mx}, {my}) leave nothing of a {w}x{h} image")
    crop = d[my:h - my, mx:w - mx]
    top = crop.max()
    if not top > 0:
        raise DegenerateInputError("distance map is zero everywhere after cropping")
    p = window.width / w
    if not math.isclose(p, window.height / h, rel_tol=_ASPECT_RTOL):
        raise ValueError("window aspect ratio does not match the image")
    sub = ObservationWindow(window.a1 + mx * p, window.a2 - mx * p, window.b1 + my * p, window.b2 - my * p)
    info = {"margin_px": [mx, my], "scale": float(top), **(params or {})}
    return ProbabilityMap(crop / top, sub, info)


def preprocess(img: GrayImage, sigma: float = DEFAULT_SIGMA, method: str = "otsu", t: float | None = None,
               margin_px=DEFAULT_MARGINS, window: ObservationWindow | None = None) -> ProbabilityMap:
    """Full chain from image to probability map, with parameters recorded."""
    mag = gradient_magnitude(img, sigma)
    if mag.pixels.max() == 0:
        raise DegenerateInputError("image has no edges")
    mask = threshold_boundaries(mag, method, t)
    thr = otsu_threshold(mag.pixels) if method == "otsu" else t
    params = {"sigma_px": sigma, "threshold_method": method, "threshold": thr,
              "input_size": [img.width, img.height]}
    return to_probability_map(distance_transform(mask), window, margin_px, params)
