"""scikit-learn compatible wrappers around the preprocessing chain and the network."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .exceptions import DimensionMismatchError
from .grid import (
    FieldPoint,
    PsfDataset,
    PsfGrid,
    center_and_crop,
    normalize_volume,
    resample,
)
from .network import MlpModel, TrainConfig, forward, train


class PsfPreprocessor(TransformerMixin, BaseEstimator):
    """Reduce high-resolution PSF scans to small unit-volume kernels.

    Each grid is centred on its rounded centroid and cropped to
    ``crop_size`` pixels, binned onto ``target_size`` pixels of
    ``target_pitch_um``, and optionally rescaled to unit volume.

    Parameters
    ----------
    source_pitch_um : float
        Pitch of the input scans. Ignored for ``PsfGrid`` inputs, which carry
        their own pitch.
    crop_size : int, default=256
    target_pitch_um : float, default=6.5
    target_size : int, default=13
    normalize : bool, default=True

    Examples
    --------
    >>> pre = PsfPreprocessor(source_pitch_um=0.307)
    >>> kernels = pre.fit_transform(scans)      # (n, 13, 13)
    """

    def __init__(self, source_pitch_um=0.307, crop_size=256, target_pitch_um=6.5,
                 target_size=13, normalize=True):
        self.source_pitch_um = source_pitch_um
        self.crop_size = crop_size
        self.target_pitch_um = target_pitch_um
        self.target_size = target_size
        self.normalize = normalize

    def _grids(self, X):
        if isinstance(X, PsfGrid):
            return [X]
        if len(X) and isinstance(X[0], PsfGrid):
            return list(X)
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise DimensionMismatchError("expected PsfGrid objects or an (n, h, w) array")
        return [PsfGrid(a, self.source_pitch_um) for a in arr]

    def fit(self, X, y=None):
        if self.crop_size < 1 or self.target_size < 1:
            raise ValueError("crop_size and target_size must be >= 1")
        if not self.target_pitch_um > 0:
            raise ValueError("target_pitch_um must be > 0")
        self.n_grids_seen_ = len(self._grids(X))
        return self

    def transform_grid(self, grid: PsfGrid) -> PsfGrid:
        out = resample(center_and_crop(grid, self.crop_size), self.target_pitch_um,
                       self.target_size)
        return normalize_volume(out) if self.normalize else out

    def transform(self, X):
        check_is_fitted(self, "n_grids_seen_")
        return np.stack([self.transform_grid(g).values for g in self._grids(X)])


class PsfRegressor(RegressorMixin, BaseEstimator):
    """Regress square PSF kernels on (defocus µm, image height mm, azimuth deg).

    ``X`` has shape ``(n, 3)``; ``y`` holds the kernels either flattened
    ``(n, K*K)`` or as ``(n, K, K)``. ``predict`` returns clamped,
    unit-volume kernels of shape ``(n, K*K)``.

    Parameters mirror :class:`psfnet.network.TrainConfig`; ``pitch_um``
    records the kernel pixel pitch in the fitted model.

    Attributes
    ----------
    model_ : MlpModel
    report_ : TrainReport
    n_features_in_ : int
    """

    def __init__(self, hidden_size=80, optimizer="projected", max_epochs=3000,
                 learning_rate=0.1, momentum=0.9, batch_size=None, validation_fraction=0.15,
                 test_fraction=0.15, early_stop_patience=50, lr_decay_patience=25,
                 hidden_activation="tanh", output_activation="linear",
                 azimuth_encoding="raw", output_ridge=1e-10, pitch_um=6.5, random_state=0):
        self.hidden_size = hidden_size
        self.optimizer = optimizer
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.test_fraction = test_fraction
        self.early_stop_patience = early_stop_patience
        self.lr_decay_patience = lr_decay_patience
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.azimuth_encoding = azimuth_encoding
        self.output_ridge = output_ridge
        self.pitch_um = pitch_um
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_size=self.hidden_size,
            optimizer=self.optimizer,
            max_epochs=self.max_epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            validation_fraction=self.validation_fraction,
            test_fraction=self.test_fraction,
            early_stop_patience=self.early_stop_patience,
            lr_decay_patience=self.lr_decay_patience,
            seed=int(self.random_state or 0),
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
            azimuth_encoding=self.azimuth_encoding,
            output_ridge=self.output_ridge,
        )

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 3:
            y = y.reshape(len(y), -1)
        X, y = validate_data(self, X, y, multi_output=True, y_numeric=True, reset=True)
        if X.shape[1] != 3:
            raise DimensionMismatchError("X must have three columns: dz_um, r_mm, phi_deg")
        if y.ndim != 2:
            raise DimensionMismatchError("y must hold one flattened kernel per row")
        k = math.isqrt(y.shape[1])
        if k * k != y.shape[1]:
            raise DimensionMismatchError(f"{y.shape[1]} outputs do not form a square kernel")
        dataset = PsfDataset(X, y.reshape(len(y), k, k), self.pitch_um)
        self.model_, self.report_ = train(dataset, self.train_config())
        return self

    def fit_dataset(self, dataset: PsfDataset):
        self.pitch_um = dataset.pitch_um
        return self.fit(dataset.fields, dataset.targets())

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False)
        return self.model_.predict_kernels(X)

    def predict_grid(self, fp: FieldPoint) -> PsfGrid:
        check_is_fitted(self, "model_")
        return forward(self.model_, fp)

    @classmethod
    def from_model(cls, model: MlpModel) -> "PsfRegressor":
        """Wrap an already trained network, e.g. one loaded from disk."""
        est = cls(hidden_size=model.hidden_size, hidden_activation=model.hidden_activation,
                  output_activation=model.output_activation,
                  azimuth_encoding=model.azimuth_encoding, pitch_um=model.output_grid[2])
        est.model_ = model
        est.n_features_in_ = 3
        return est
