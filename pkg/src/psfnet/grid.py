"""PSF grid types and the preprocessing chain that takes a raw measurement
down to a small, volume-normalized convolution kernel.

Grid coordinates are (x, y) = (column, row) with the origin at the top-left
pixel. All operations are pure; inputs are never modified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .exceptions import (
    AllZeroGridError,
    DimensionMismatchError,
    UpsampleNotSupportedError,
)


@dataclass(frozen=True, eq=False)
class PsfGrid:
    """Non-negative intensity grid sampled at a physical pixel pitch.

    ``values`` has shape ``(height, width)`` and is stored as float64.
    """

    values: np.ndarray
    pitch_um: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DimensionMismatchError(f"PSF grid must be 2-D, got shape {values.shape}")
        if values.size == 0:
            raise DimensionMismatchError("PSF grid must not be empty")
        if not np.all(np.isfinite(values)):
            raise ValueError("PSF grid contains non-finite values")
        if np.any(values < 0):
            raise ValueError("PSF grid values must be non-negative")
        if not (self.pitch_um > 0):
            raise ValueError(f"pitch_um must be > 0, got {self.pitch_um}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pitch_um", float(self.pitch_um))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, PsfGrid):
            return NotImplemented
        return self.pitch_um == other.pitch_um and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"PsfGrid({self.width}x{self.height}, pitch_um={self.pitch_um}, total={self.total:.6g})"


def canonical_azimuth(phi_deg: float) -> float:
    phi = math.fmod(float(phi_deg), 360.0)
    if phi < 0:
        phi += 360.0
    # fmod of tiny negatives lands on 360.0 after the shift
    if phi >= 360.0:
        phi = 0.0
    return phi + 0.0


@dataclass(frozen=True)
class FieldPoint:
    """Regression inputs: defocus (µm), image height (mm), azimuth (degrees)."""

    dz_um: float
    r_mm: float
    phi_deg: float

    def __post_init__(self):
        object.__setattr__(self, "dz_um", float(self.dz_um))
        object.__setattr__(self, "r_mm", float(self.r_mm))
        object.__setattr__(self, "phi_deg", canonical_azimuth(self.phi_deg))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dz_um, self.r_mm, self.phi_deg)


class PsfDataset:
    """Ordered (FieldPoint, PsfGrid) pairs sharing one grid shape and pitch.

    Stored column-wise: ``fields`` is ``(n, 3)`` and ``grids`` is
    ``(n, height, width)``.
    """

    def __init__(self, fields, grids, pitch_um: float):
        fields = np.array(fields, dtype=np.float64, copy=True).reshape(-1, 3)
        grids = np.array(grids, dtype=np.float64, copy=True)
        if grids.ndim != 3:
            raise DimensionMismatchError(f"grids must have shape (n, h, w), got {grids.shape}")
        if len(fields) != len(grids):
            raise DimensionMismatchError(
                f"{len(fields)} field points but {len(grids)} grids"
            )
        if len(fields) < 1:
            raise ValueError("a dataset needs at least one sample")
        if np.any(grids < 0) or not np.all(np.isfinite(grids)):
            raise ValueError("dataset grids must be finite and non-negative")
        if not (pitch_um > 0):
            raise ValueError(f"pitch_um must be > 0, got {pitch_um}")
        fields[:, 2] = [canonical_azimuth(p) for p in fields[:, 2]]
        fields.setflags(write=False)
        grids.setflags(write=False)
        self.fields = fields
        self.grids = grids
        self.pitch_um = float(pitch_um)

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[FieldPoint, PsfGrid]]) -> "PsfDataset":
        if not samples:
            raise ValueError("a dataset needs at least one sample")
        first = samples[0][1]
        for _, g in samples:
            if g.values.shape != first.values.shape or g.pitch_um != first.pitch_um:
                raise DimensionMismatchError("all grids in a dataset must share shape and pitch")
        fields = [fp.as_tuple() for fp, _ in samples]
        grids = [g.values for _, g in samples]
        return cls(fields, grids, first.pitch_um)

    @property
    def grid_width(self) -> int:
        return self.grids.shape[2]

    @property
    def grid_height(self) -> int:
        return self.grids.shape[1]

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, i: int) -> tuple[FieldPoint, PsfGrid]:
        return FieldPoint(*self.fields[i]), PsfGrid(self.grids[i], self.pitch_um)

    def __iter__(self) -> Iterator[tuple[FieldPoint, PsfGrid]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[tuple[FieldPoint, PsfGrid]]:
        return list(self)

    def targets(self) -> np.ndarray:
        """Row-major flattened grids, shape ``(n, height * width)``."""
        return self.grids.reshape(len(self), -1)

    def subset(self, indices) -> "PsfDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return PsfDataset(self.fields[indices], self.grids[indices], self.pitch_um)

    def concat(self, other: "PsfDataset") -> "PsfDataset":
        if other.grids.shape[1:] != self.grids.shape[1:] or other.pitch_um != self.pitch_um:
            raise DimensionMismatchError("datasets differ in grid shape or pitch")
        return PsfDataset(
            np.concatenate([self.fields, other.fields]),
            np.concatenate([self.grids, other.grids]),
            self.pitch_um,
        )

    def __eq__(self, other):
        if not isinstance(other, PsfDataset):
            return NotImplemented
        return (
            self.pitch_um == other.pitch_um
            and np.array_equal(self.fields, other.fields)
            and np.array_equal(self.grids, other.grids)
        )

    def __repr__(self):
        return (
            f"PsfDataset(n={len(self)}, grid={self.grid_width}x{self.grid_height}, "
            f"pitch_um={self.pitch_um})"
        )


def centroid(grid: PsfGrid) -> tuple[float, float]:
    """Intensity-weighted mean position ``(cx, cy)`` in pixel units."""
    v = grid.values
    total = v.sum()
    if total <= 0:
        raise AllZeroGridError("centroid undefined for a grid with zero total intensity")
    cx = float(v.sum(axis=0) @ np.arange(v.shape[1])) / total
    cy = float(v.sum(axis=1) @ np.arange(v.shape[0])) / total
    return cx, cy


def center_and_crop(grid: PsfGrid, out_size: int) -> PsfGrid:
    """Cut an ``out_size`` square window centred on the rounded centroid.

    The window is shifted by whole pixels only, so that the centroid of the
    result lies within half a pixel of ``((n-1)/2, (n-1)/2)``. Parts of the
    window outside the input are zero.
    """
    if out_size < 1:
        raise ValueError(f"out_size must be >= 1, got {out_size}")
    cx, cy = centroid(grid)
    half = (out_size - 1) / 2.0
    ox = math.floor(cx - half + 0.5)
    oy = math.floor(cy - half + 0.5)

    out = np.zeros((out_size, out_size))
    h, w = grid.values.shape
    x0, x1 = max(ox, 0), min(ox + out_size, w)
    y0, y1 = max(oy, 0), min(oy + out_size, h)
    if x0 < x1 and y0 < y1:
        out[y0 - oy : y1 - oy, x0 - ox : x1 - ox] = grid.values[y0:y1, x0:x1]
    return PsfGrid(out, grid.pitch_um)


def _overlap_matrix(n_src: int, n_dst: int, ratio: float) -> np.ndarray:
    """Fraction of each source pixel falling into each destination pixel.

    Lengths are in source pixels; both grids share their centre.
    """
    src_edges = np.arange(n_src + 1, dtype=np.float64)
    start = n_src / 2.0 - n_dst * ratio / 2.0
    dst_edges = start + ratio * np.arange(n_dst + 1, dtype=np.float64)
    lo = np.maximum(dst_edges[:-1, None], src_edges[None, :-1])
    hi = np.minimum(dst_edges[1:, None], src_edges[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def resample(grid: PsfGrid, target_pitch_um: float, target_size: int) -> PsfGrid:
    """Area-averaged binning onto a coarser, centred ``target_size`` square.

    Each output pixel integrates the input intensity over its physical
    footprint. Footprint regions beyond the input read as zero.
    """
    if target_size < 1:
        raise ValueError(f"target_size must be >= 1, got {target_size}")
    if target_pitch_um < grid.pitch_um:
        raise UpsampleNotSupportedError(
            f"target pitch {target_pitch_um} µm is finer than source pitch {grid.pitch_um} µm"
        )
    ratio = target_pitch_um / grid.pitch_um
    h, w = grid.values.shape
    mx = _overlap_matrix(w, target_size, ratio)
    my = _overlap_matrix(h, target_size, ratio)
    out = my @ grid.values @ mx.T
    return PsfGrid(np.clip(out, 0.0, None), target_pitch_um)


def normalize_volume(grid: PsfGrid) -> PsfGrid:
    total = grid.values.sum()
    if total <= 0:
        raise AllZeroGridError("cannot normalize a grid with zero total intensity")
    return PsfGrid(grid.values / total, grid.pitch_um)


def flatten(grid: PsfGrid) -> np.ndarray:
    return grid.values.reshape(-1).copy()


def unflatten(v, width: int, height: int, pitch_um: float) -> PsfGrid:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != width * height:
        raise DimensionMismatchError(
            f"vector of length {v.size} cannot fill a {width}x{height} grid"
        )
    return PsfGrid(v.reshape(height, width), pitch_um)
