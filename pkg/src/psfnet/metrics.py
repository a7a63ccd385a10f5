"""Distances between predicted and reference PSFs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError
from .grid import PsfDataset, PsfGrid
from .network import MlpModel


def _pair(a: PsfGrid, b: PsfGrid) -> tuple[np.ndarray, np.ndarray]:
    if a.values.shape != b.values.shape:
        raise DimensionMismatchError(f"grid shapes {a.values.shape} and {b.values.shape} differ")
    return a.values, b.values


def eq2_distance(a: PsfGrid, b: PsfGrid) -> float:
    """Root of the summed squared pixel differences."""
    va, vb = _pair(a, b)
    return float(np.sqrt(np.sum((va - vb) ** 2)))


def per_pixel_rmse(a: PsfGrid, b: PsfGrid) -> float:
    """``eq2_distance`` divided by the square root of the pixel count.

    Comparable across kernel resolutions.
    """
    va, _ = _pair(a, b)
    return eq2_distance(a, b) / math.sqrt(va.size)


@dataclass(frozen=True)
class EvalSummary:
    n_samples: int
    mean_eq2: float
    max_eq2: float
    per_pixel_rmse: float

    CSV_HEADER = "n,mean_eq2,max_eq2,per_pixel_rmse"

    def csv_row(self) -> str:
        return (f"{self.n_samples},{self.mean_eq2:.12g},{self.max_eq2:.12g},"
                f"{self.per_pixel_rmse:.12g}")


def summarize(predictions: np.ndarray, targets: np.ndarray) -> EvalSummary:
    """Summary over ``(n, pixels)`` prediction and target arrays."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise DimensionMismatchError(f"shapes {predictions.shape} and {targets.shape} differ")
    sq = (predictions - targets) ** 2
    dist = np.sqrt(sq.sum(axis=1))
    worst = float(dist.max())
    # summation rounding can push the mean of equal values past their max
    return EvalSummary(
        n_samples=len(dist),
        mean_eq2=min(float(np.sort(dist).mean()), worst),
        max_eq2=worst,
        per_pixel_rmse=float(np.sqrt(np.sort(sq.ravel()).mean())),
    )


def evaluate(model: MlpModel, dataset: PsfDataset) -> EvalSummary:
    """Score the model's kernels against every sample of ``dataset``."""
    w, h, _ = model.output_grid
    if (dataset.grid_width, dataset.grid_height) != (w, h):
        raise DimensionMismatchError(
            f"model predicts {w}x{h} kernels, dataset holds "
            f"{dataset.grid_width}x{dataset.grid_height} grids"
        )
    return summarize(model.predict_kernels(dataset.fields), dataset.targets())
