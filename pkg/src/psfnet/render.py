"""Apply a PSF network to images as a spatially-variant blur.

Pixel coordinates are (x, y) = (column, row). For field angles the image +y
axis points up, i.e. towards smaller row indices, so a pixel straight above
the optical axis has azimuth 90 degrees.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import BehindFocalPlaneError, DimensionMismatchError, PitchMismatchError
from .grid import FieldPoint
from .network import MlpModel

log = logging.getLogger(__name__)

DEFAULT_DZ_LIMIT_UM = 50.0


@dataclass(frozen=True, eq=False)
class Image:
    """Single-channel image, ``values`` of shape ``(height, width)``."""

    values: np.ndarray
    pitch_um: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.size == 0:
            raise DimensionMismatchError(f"images must be non-empty 2-D arrays, got {values.shape}")
        if not self.pitch_um > 0:
            raise ValueError("pitch_um must be > 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pitch_um", float(self.pitch_um))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FieldMapping:
    """Optical axis position (pixels) and sensor pitch (µm per pixel)."""

    cx: float
    cy: float
    pitch_um: float

    def __post_init__(self):
        if not self.pitch_um > 0:
            raise ValueError("pitch_um must be > 0")

    @classmethod
    def centered(cls, width: int, height: int, pitch_um: float) -> "FieldMapping":
        return cls((width - 1) / 2.0, (height - 1) / 2.0, pitch_um)


@dataclass(frozen=True, eq=False)
class DefocusMap:
    """Per-pixel defocus in µm, shape ``(height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DimensionMismatchError("defocus maps are 2-D")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, width: int, height: int, dz_um: float) -> "DefocusMap":
        return cls(np.full((height, width), float(dz_um)))

    @classmethod
    def from_raw(cls, raw: np.ndarray, offset: float, scale: float) -> "DefocusMap":
        """Map raw integer samples (e.g. a 16-bit PGM) to µm as ``raw * scale + offset``."""
        return cls(np.asarray(raw, dtype=np.float64) * scale + offset)


def pixel_to_field(mapping: FieldMapping, x: float, y: float, dz: float) -> FieldPoint:
    dx = x - mapping.cx
    dy = mapping.cy - y
    r_mm = mapping.pitch_um * math.hypot(dx, dy) / 1000.0
    phi = math.degrees(math.atan2(dy, dx)) if (dx or dy) else 0.0
    return FieldPoint(dz, r_mm, phi)


def image_distance(object_distance_mm: float, focal_length_mm: float) -> float:
    """Thin-lens image distance ``f*o / (o - f)``; infinity maps to ``f``."""
    if math.isinf(object_distance_mm):
        return focal_length_mm
    if object_distance_mm <= focal_length_mm:
        raise BehindFocalPlaneError(
            f"object distance {object_distance_mm} mm is not beyond the focal length "
            f"{focal_length_mm} mm"
        )
    return focal_length_mm * object_distance_mm / (object_distance_mm - focal_length_mm)


def defocus_from_depth(object_distance_mm: float, focal_length_mm: float,
                       focus_distance_mm: float) -> float:
    """Image-side defocus in µm of an object when the lens is focused elsewhere.

    Positive when the object is nearer than the focus distance.
    """
    if not focal_length_mm > 0:
        raise ValueError("focal length must be > 0")
    i_obj = image_distance(object_distance_mm, focal_length_mm)
    i_focus = image_distance(focus_distance_mm, focal_length_mm)
    return (i_obj - i_focus) * 1000.0


def defocus_map_from_depth(depth_mm: np.ndarray, focal_length_mm: float,
                           focus_distance_mm: float) -> DefocusMap:
    depth_mm = np.asarray(depth_mm, dtype=np.float64)
    dz = [defocus_from_depth(d, focal_length_mm, focus_distance_mm) for d in depth_mm.ravel()]
    return DefocusMap(np.reshape(dz, depth_mm.shape))


def linear_depth_gradient(width: int, height: int, dz_left: float, dz_right: float) -> DefocusMap:
    if width < 2:
        raise ValueError("a depth gradient needs at least two columns")
    cols = dz_left + (dz_right - dz_left) * np.arange(width) / (width - 1)
    return DefocusMap(np.broadcast_to(cols, (height, width)))


def checkerboard(width: int, height: int, cell_px: int, low: float, high: float,
                 pitch_um: float = 1.0) -> Image:
    """Checkerboard whose top-left cell is ``high``."""
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    yy, xx = np.indices((height, width))
    even = ((yy // cell_px + xx // cell_px) % 2) == 0
    return Image(np.where(even, float(high), float(low)), pitch_um)


def _tile_centers(n: int, tile_px: int) -> np.ndarray:
    # middle pixel of each tile, clipped to the image for the last one
    starts = np.arange(0, n, tile_px)
    stops = np.minimum(starts + tile_px, n)
    return (starts + stops - 1) // 2


def _tile_weights(n: int, centers: np.ndarray) -> list[tuple[int, int, np.ndarray]]:
    """Piecewise-linear partition of unity over ``n`` pixels.

    Returns ``(start, stop, weights)`` per tile; weights fall linearly from 1
    at the tile's centre to 0 at its neighbours' centres and stay at 1
    beyond the outermost centres.
    """
    out = []
    pos = np.arange(n, dtype=np.float64)
    for j, c in enumerate(centers):
        lo = 0 if j == 0 else centers[j - 1] + 1
        hi = n if j == len(centers) - 1 else centers[j + 1]
        x = pos[lo:hi]
        w = np.ones_like(x)
        if j > 0:
            left = x < c
            w[left] = (x[left] - centers[j - 1]) / (c - centers[j - 1])
        if j < len(centers) - 1:
            right = x > c
            w[right] = (centers[j + 1] - x[right]) / (centers[j + 1] - c)
        out.append((lo, hi, w))
    return out


def convolve_spatially_variant(image: Image, model: MlpModel, mapping: FieldMapping,
                               dzmap: DefocusMap, tile_px: int,
                               dz_limit: float = DEFAULT_DZ_LIMIT_UM) -> tuple[Image, int]:
    """Blur ``image`` with kernels inferred per tile and cross-faded between tiles.

    One kernel is inferred at the centre pixel of every ``tile_px`` square
    tile, using that pixel's defocus. Each output pixel is the convolution of
    the edge-replicated image with the bilinear blend of the nearest tile
    kernels, so ``tile_px=1`` is exact per-pixel inference.

    Defocus values beyond ``±dz_limit`` are clamped. Returns the blurred
    image and the number of clamped defocus pixels.
    """
    kw, kh, kpitch = model.output_grid
    if kpitch != image.pitch_um:
        raise PitchMismatchError(
            f"model kernels are sampled at {kpitch} µm but the image pitch is {image.pitch_um} µm"
        )
    if dzmap.values.shape != image.values.shape:
        raise DimensionMismatchError(
            f"defocus map {dzmap.values.shape} does not match image {image.values.shape}"
        )
    if tile_px < 1:
        raise ValueError("tile_px must be >= 1")

    dz = dzmap.values
    n_clamped = int(np.count_nonzero(np.abs(dz) > dz_limit))
    if n_clamped:
        log.warning("%d defocus values clamped to ±%g µm", n_clamped, dz_limit)
    dz = np.clip(dz, -dz_limit, dz_limit)

    h, w = image.values.shape
    cys, cxs = _tile_centers(h, tile_px), _tile_centers(w, tile_px)
    fields = [pixel_to_field(mapping, cx, cy, dz[cy, cx]).as_tuple() for cy in cys for cx in cxs]
    kernels = model.predict_kernels(fields).reshape(len(cys), len(cxs), kh, kw)

    # flipped kernels turn the convolution into a correlation over the padded image
    ay, ax = kh // 2, kw // 2
    padded = np.pad(image.values, ((kh - 1 - ay, ay), (kw - 1 - ax, ax)), mode="edge")
    flipped = kernels[:, :, ::-1, ::-1]

    out = np.zeros((h, w))
    for ty, (y0, y1, wy) in enumerate(_tile_weights(h, cys)):
        for tx, (x0, x1, wx) in enumerate(_tile_weights(w, cxs)):
            windows = sliding_window_view(padded[y0:y1 + kh - 1, x0:x1 + kw - 1], (kh, kw))
            conv = np.tensordot(windows, flipped[ty, tx], axes=([2, 3], [0, 1]))
            out[y0:y1, x0:x1] += wy[:, None] * wx[None, :] * conv
    return Image(np.clip(out, 0.0, None), image.pitch_um), n_clamped
