"""Deterministic synthetic aberrated lens.

Stands in for measured through-focus PSF scans. The profile is a split
(skewed) anisotropic Gaussian whose widths grow with defocus and image
height:

* best focus moves with field curvature, ``delta = dz - c * R**2``
* radial width  ``base * (1 + astig * |R|) + blur * |delta| * (1 + sign(delta) * eps)``
* tangential width is the same without the astigmatism term
* coma skews the radial profile outward: the outer half-width is scaled
  by ``1 + coma * |R|`` and the inner one divided by it

Pixels are area-integrated by symmetric supersampling, so rotating the
azimuth by 90 degrees rotates a square grid exactly. A fixed-pattern noise
derived from a hash of (seed, pixel index) is added on top.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields

import numpy as np

from .grid import FieldPoint, PsfDataset, PsfGrid

DZ_ENVELOPE_UM = 50.0
R_ENVELOPE_MM = 3.0


@dataclass(frozen=True)
class SynthLensSpec:
    focal_length_mm: float = 6.0
    seed: int = 0
    base_sigma_um: float = 4.0
    defocus_blur_rate: float = 0.3
    field_curvature_um_per_mm2: float = 1.5
    astigmatism_rate: float = 0.25
    coma_skew_rate: float = 0.1
    asymmetry_eps: float = 0.15
    noise_floor: float = 1e-7

    def __post_init__(self):
        if not self.focal_length_mm > 0:
            raise ValueError("focal_length_mm must be > 0")
        if not self.base_sigma_um > 0:
            raise ValueError("base_sigma_um must be > 0")
        for name in ("defocus_blur_rate", "astigmatism_rate", "coma_skew_rate",
                     "asymmetry_eps", "noise_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def dumps(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def loads(cls, text: str) -> "SynthLensSpec":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"line {lineno}: unknown or malformed entry {line!r}")
            kwargs[key] = int(value) if types[key] in (int, "int") else float(value)
        return cls(**kwargs)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SynthLensSpec":
        with open(path) as fh:
            return cls.loads(fh.read())


@dataclass(frozen=True)
class SamplingGrid:
    """Cartesian product of defocus, image height and azimuth samples."""

    dz_values: tuple
    r_values: tuple
    phi_values: tuple

    def __post_init__(self):
        for name in ("dz_values", "r_values", "phi_values"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not (self.dz_values and self.r_values and self.phi_values):
            raise ValueError("every sampling axis needs at least one value")
        if any(abs(v) > DZ_ENVELOPE_UM for v in self.dz_values):
            raise ValueError(f"defocus samples must lie within ±{DZ_ENVELOPE_UM} µm")
        if any(abs(v) > R_ENVELOPE_MM for v in self.r_values):
            raise ValueError(f"image height samples must lie within ±{R_ENVELOPE_MM} mm")

    def __len__(self):
        return len(self.dz_values) * len(self.r_values) * len(self.phi_values)

    def points(self) -> list[FieldPoint]:
        return [
            FieldPoint(dz, r, phi)
            for dz in self.dz_values
            for r in self.r_values
            for phi in self.phi_values
        ]


# Reconstructions of the two measurement series: only the totals (243 and
# 972) are known, not how they factor over the three axes.
_IN_PLANE_R = tuple(np.linspace(0.0, R_ENVELOPE_MM, 9))
_IN_PLANE_PHI = tuple(40.0 * k for k in range(9))

PRESETS = {
    "series-a": SamplingGrid((-11.25, 0.0, 11.25), _IN_PLANE_R, _IN_PLANE_PHI),
    "series-b": SamplingGrid(tuple(np.linspace(-DZ_ENVELOPE_UM, DZ_ENVELOPE_UM, 12)),
                             _IN_PLANE_R, _IN_PLANE_PHI),
}


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def value_noise(seed: int, width: int, height: int) -> np.ndarray:
    """Uniform [0, 1) pattern that depends only on seed and pixel index."""
    index = np.arange(width * height, dtype=np.uint64)
    key = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    h = _splitmix64(_splitmix64(index ^ _splitmix64(np.full(1, key))))
    return ((h >> np.uint64(11)).astype(np.float64) / float(1 << 53)).reshape(height, width)


def profile_widths(spec: SynthLensSpec, fp: FieldPoint) -> tuple[float, float, float, float]:
    """Return ``(sigma_out, sigma_in, sigma_t, skew)`` in µm for a field point."""
    r = abs(fp.r_mm)
    delta = fp.dz_um - spec.field_curvature_um_per_mm2 * fp.r_mm ** 2
    blur = spec.defocus_blur_rate * abs(delta) * (1.0 + math.copysign(1.0, delta) * spec.asymmetry_eps)
    sigma_r = spec.base_sigma_um * (1.0 + spec.astigmatism_rate * r) + blur
    sigma_t = spec.base_sigma_um + blur
    skew = 1.0 + spec.coma_skew_rate * r
    return sigma_r * skew, sigma_r / skew, sigma_t, skew


def _supersampling(pitch_um: float, sigma_min: float) -> int:
    s = math.ceil(3.0 * pitch_um / sigma_min)
    s = min(max(s, 1), 15)
    return s if s % 2 else s + 1


def synth_psf(spec: SynthLensSpec, fp: FieldPoint, width: int, height: int,
              pitch_um: float) -> PsfGrid:
    """Render the lens PSF at ``fp`` onto a ``width x height`` grid.

    The blob is centred on the grid, with +y pointing to smaller row indices.
    Values are the integrated intensity per pixel (unit total over the
    plane, minus what falls outside the grid) plus ``noise_floor`` times the
    fixed noise pattern.
    """
    if width < 3 or height < 3:
        raise ValueError("synthetic PSF grids must be at least 3x3")
    if not pitch_um > 0:
        raise ValueError("pitch_um must be > 0")
    s_out, s_in, s_t, _ = profile_widths(spec, fp)
    ss = _supersampling(pitch_um, min(s_in, s_t))

    sub = (np.arange(ss) - (ss - 1) / 2.0) / ss
    xs = ((np.arange(width) - (width - 1) / 2.0)[:, None] + sub[None, :]).ravel() * pitch_um
    ys = (((height - 1) / 2.0 - np.arange(height))[:, None] - sub[None, :]).ravel() * pitch_um
    x = xs[None, :]
    y = ys[:, None]

    phi = math.radians(fp.phi_deg)
    c, s = math.cos(phi), math.sin(phi)
    outward = -1.0 if fp.r_mm < 0 else 1.0
    a = outward * (x * c + y * s)
    t = -x * s + y * c
    sigma_a = np.where(a >= 0, s_out, s_in)
    density = np.exp(-0.5 * ((a / sigma_a) ** 2 + (t / s_t) ** 2))
    density /= 2.0 * math.pi * s_t * 0.5 * (s_out + s_in)

    cells = density.reshape(height, ss, width, ss).mean(axis=(1, 3)) * pitch_um ** 2
    if spec.noise_floor > 0:
        cells = cells + spec.noise_floor * value_noise(spec.seed, width, height)
    return PsfGrid(cells, pitch_um)


def generate_dataset(spec: SynthLensSpec, grid: SamplingGrid, width: int, height: int,
                     pitch_um: float) -> PsfDataset:
    """One sample per grid point, ordered dz outer, R middle, phi inner."""
    points = grid.points()
    grids = np.stack([synth_psf(spec, fp, width, height, pitch_um).values for fp in points])
    return PsfDataset([fp.as_tuple() for fp in points], grids, pitch_um)
