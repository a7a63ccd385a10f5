"""Single-hidden-layer feed-forward network mapping field parameters to a PSF.

The network has ``3 -> H -> K*K`` neurons. Inputs are affinely scaled so that
the training envelope of each parameter spans [-1, 1]; outputs are the
row-major pixels of a ``K x K`` kernel.

Training minimises the per-sample sum of squared pixel errors and stops
once the validation score has not improved for ``early_stop_patience``
epochs; the best-scoring weights are the ones returned. See ``TrainConfig``
for the available optimizers.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadMagicError,
    BadVersionError,
    DimensionMismatchError,
    InsufficientDataError,
    NonFiniteLossError,
    TruncatedFileError,
)
from .grid import FieldPoint, PsfDataset, PsfGrid

log = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = {"tanh": 0, "sigmoid": 1, "relu": 2}
OUTPUT_ACTIVATIONS = {"linear": 0, "sigmoid": 1}
AZIMUTH_ENCODINGS = ("raw", "sincos")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_slope(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(eq=False)
class MlpModel:
    """Weights, activations and input scaling of a trained PSF network.

    ``weights[l]`` has shape ``(layer_sizes[l+1], layer_sizes[l])``.
    ``input_norm`` rows are ``(offset, scale)`` per network input.
    ``output_grid`` is ``(width, height, pitch_um)`` of the predicted kernel.
    """

    layer_sizes: tuple
    hidden_activation: str
    output_activation: str
    weights: list
    biases: list
    input_norm: np.ndarray
    output_grid: tuple

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        self.input_norm = np.array(self.input_norm, dtype=np.float64).reshape(-1, 2)
        w, h, pitch = self.output_grid
        self.output_grid = (int(w), int(h), float(pitch))

        if len(self.layer_sizes) != 3:
            raise DimensionMismatchError("only single-hidden-layer networks are supported")
        if self.layer_sizes[0] not in (3, 4):
            raise DimensionMismatchError("networks take 3 inputs (4 with sin/cos azimuth)")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != 2 or len(self.biases) != 2:
            raise DimensionMismatchError("expected two weight layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != shape or b.shape != (shape[0],):
                raise DimensionMismatchError(
                    f"layer {i}: weights {w.shape} / biases {b.shape}, expected {shape}"
                )
        if self.input_norm.shape != (self.layer_sizes[0], 2):
            raise DimensionMismatchError("one (offset, scale) pair per input is required")
        if np.any(self.input_norm[:, 1] <= 0):
            raise ValueError("input scales must be > 0")
        if self.output_grid[0] * self.output_grid[1] != self.layer_sizes[-1]:
            raise DimensionMismatchError("output grid does not match the output layer size")

    @property
    def azimuth_encoding(self) -> str:
        return "raw" if self.layer_sizes[0] == 3 else "sincos"

    @property
    def hidden_size(self) -> int:
        return self.layer_sizes[1]

    def encode(self, fields) -> np.ndarray:
        """Scaled network inputs for an ``(n, 3)`` array of (dz, R, phi)."""
        return _scaled_inputs(np.atleast_2d(np.asarray(fields, dtype=np.float64)),
                              self.input_norm, self.azimuth_encoding)

    def activations(self, inputs: np.ndarray) -> np.ndarray:
        """Raw output-layer activations for already scaled inputs."""
        hidden = _activate(self.hidden_activation, inputs @ self.weights[0].T + self.biases[0])
        return _activate(self.output_activation, hidden @ self.weights[1].T + self.biases[1])

    def predict_raw(self, fields) -> np.ndarray:
        return self.activations(self.encode(fields))

    def predict_kernels(self, fields) -> np.ndarray:
        """Kernels (clamped, unit volume) for ``(n, 3)`` fields, shape ``(n, K*K)``."""
        return as_kernels(self.predict_raw(fields))

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_sizes, self.hidden_activation, self.output_activation,
                        [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.input_norm.copy(), self.output_grid)

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            self.layer_sizes == other.layer_sizes
            and self.hidden_activation == other.hidden_activation
            and self.output_activation == other.output_activation
            and self.output_grid == other.output_grid
            and np.array_equal(self.input_norm, other.input_norm)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


def _scaled_inputs(fields: np.ndarray, norm: np.ndarray, encoding: str) -> np.ndarray:
    if encoding == "sincos":
        phi = np.radians(fields[:, 2])
        fields = np.column_stack([fields[:, 0], fields[:, 1], np.sin(phi), np.cos(phi)])
    return (fields - norm[:, 0]) / norm[:, 1]


def envelope_norm(fields, encoding: str = "raw") -> np.ndarray:
    """``(offset, scale)`` pairs mapping each parameter's range onto [-1, 1]."""
    fields = np.asarray(fields, dtype=np.float64).reshape(-1, 3)
    lo, hi = fields.min(axis=0), fields.max(axis=0)
    offset = (hi + lo) / 2.0
    scale = (hi - lo) / 2.0
    scale[scale == 0] = 1.0
    norm = np.column_stack([offset, scale])
    if encoding == "sincos":
        norm = np.vstack([norm[:2], [[0.0, 1.0], [0.0, 1.0]]])
    return norm


def normalize_inputs(fp: FieldPoint, norm) -> np.ndarray:
    norm = np.asarray(norm, dtype=np.float64).reshape(-1, 2)
    if np.any(norm[:, 1] <= 0):
        raise ValueError("input scales must be > 0")
    encoding = "raw" if len(norm) == 3 else "sincos"
    return _scaled_inputs(np.array([fp.as_tuple()]), norm, encoding)[0]


def as_kernels(raw: np.ndarray) -> np.ndarray:
    """Clamp negatives and rescale each row to unit sum.

    Rows that are entirely non-positive become uniform.
    """
    k = np.clip(np.atleast_2d(raw), 0.0, None)
    totals = k.sum(axis=1, keepdims=True)
    dead = totals[:, 0] <= 0
    if np.any(dead):
        k[dead] = 1.0
        totals[dead] = k.shape[1]
    return k / totals


def forward(model: MlpModel, fp: FieldPoint) -> PsfGrid:
    w, h, pitch = model.output_grid
    kernel = model.predict_kernels([fp.as_tuple()])[0]
    return PsfGrid(kernel.reshape(h, w), pitch)


def loss(prediction, target) -> float:
    """Root of the summed squared pixel differences."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise DimensionMismatchError(f"shapes {prediction.shape} and {target.shape} differ")
    return float(np.sqrt(np.sum((prediction - target) ** 2)))


def _backprop(model: MlpModel, inputs: np.ndarray, targets: np.ndarray):
    """Mean over samples of the squared error and its parameter gradients."""
    n = len(inputs)
    w1, w2 = model.weights
    z1 = inputs @ w1.T + model.biases[0]
    a1 = _activate(model.hidden_activation, z1)
    z2 = a1 @ w2.T + model.biases[1]
    out = _activate(model.output_activation, z2)
    err = out - targets
    objective = float(np.sum(err * err)) / n

    d2 = (2.0 / n) * err * _activation_slope(model.output_activation, z2, out)
    d1 = (d2 @ w2) * _activation_slope(model.hidden_activation, z1, a1)
    grads = [(d1.T @ inputs, d1.sum(axis=0)), (d2.T @ a1, d2.sum(axis=0))]
    return objective, grads, out


def gradient(model: MlpModel, fp: FieldPoint, target) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of ``sum((output - target)**2)`` for one sample.

    Returned as ``[(dW, db), ...]`` matching ``model.weights`` and ``model.biases``.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.size != model.layer_sizes[-1]:
        raise DimensionMismatchError(
            f"target has {target.size} values, network outputs {model.layer_sizes[-1]}"
        )
    _, grads, _ = _backprop(model, model.encode([fp.as_tuple()]), target[None, :])
    return grads


OPTIMIZERS = ("projected", "momentum", "adam")


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``optimizer`` picks the algorithm:

    ``"projected"``
        L-BFGS on the hidden layer while the linear output layer is solved
        exactly by (lightly ridged) least squares at every step. One
        iteration counts as one epoch. Needs a linear output.
    ``"momentum"``
        Gradient descent with heavy-ball momentum.
    ``"adam"``
        Adam, with ``momentum`` as the first-moment decay.

    ``learning_rate``, ``momentum``, ``batch_size`` and ``lr_decay_patience``
    only affect the two gradient-descent optimizers.
    """

    hidden_size: int = 80
    max_epochs: int = 3000
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int | None = None
    validation_fraction: float = 0.15
    test_fraction: float = 0.15
    early_stop_patience: int = 50
    lr_decay_patience: int = 25
    seed: int = 0
    split_seed: int | None = None
    hidden_activation: str = "tanh"
    output_activation: str = "linear"
    azimuth_encoding: str = "raw"
    optimizer: str = "projected"
    output_ridge: float = 1e-10

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if not 0 <= self.test_fraction < 1 or self.validation_fraction + self.test_fraction >= 1:
            raise ValueError("test_fraction must lie in [0, 1 - validation_fraction)")
        if self.early_stop_patience < 1 or self.lr_decay_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.azimuth_encoding not in AZIMUTH_ENCODINGS:
            raise ValueError(f"unknown azimuth encoding {self.azimuth_encoding!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "projected" and self.output_activation != "linear":
            raise ValueError("the projected optimizer needs a linear output layer")
        if self.output_ridge < 0:
            raise ValueError("output_ridge must be >= 0")


@dataclass
class TrainReport:
    final_train_perf: float
    final_val_perf: float
    epochs_run: int
    history: list = field(default_factory=list)
    seed: int = 0
    best_epoch: int = 0
    train_indices: np.ndarray = None
    val_indices: np.ndarray = None
    test_indices: np.ndarray = None

    def history_csv(self) -> str:
        lines = ["epoch,train_perf,val_perf"]
        lines += [f"{i + 1},{t:.12g},{v:.12g}" for i, (t, v) in enumerate(self.history)]
        return "\n".join(lines) + "\n"


def split_indices(n: int, validation_fraction: float, test_fraction: float, seed: int):
    """Seeded shuffle into train / validation / test index arrays.

    Validation or test sets that would round to zero samples stay empty; at
    least one sample is always kept for training.
    """
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(math.floor(n * test_fraction))
    n_val = int(math.floor(n * validation_fraction))
    if n - n_test - n_val < 1:
        n_test = n_val = 0
    test = np.sort(order[:n_test])
    val = np.sort(order[n_test:n_test + n_val])
    train = np.sort(order[n_test + n_val:])
    return train, val, test


def mean_distance(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the per-sample root-sum-of-squares distance."""
    return float(np.mean(np.sqrt(np.sum((pred - target) ** 2, axis=1))))


def init_model(n_inputs: int, hidden: int, n_outputs: int, norm: np.ndarray,
               output_grid: tuple, cfg: TrainConfig, seed: int) -> MlpModel:
    """Weights and biases uniform in ``±1/sqrt(fan_in)``, drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in ((n_inputs, hidden), (hidden, n_outputs)):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel((n_inputs, hidden, n_outputs), cfg.hidden_activation, cfg.output_activation,
                    weights, biases, norm, output_grid)


class _Momentum:
    """Heavy-ball gradient descent: ``v = mu*v - lr*g; p += v``."""

    def __init__(self, params, momentum):
        self.params = params
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads, lr):
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v -= lr * g
            p += v

    def reset(self):
        for v in self.velocity:
            v[...] = 0.0


class _Adam:
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params, momentum):
        self.params = params
        self.beta1 = momentum
        self.reset()

    def step(self, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def reset(self):
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]


class _EarlyStopping:
    """Tracks the best validation score and the parameters that produced it."""

    def __init__(self, params, patience):
        self.params = params
        self.patience = patience
        self.best = math.inf
        self.best_params = [p.copy() for p in params]
        self.best_epoch = 0
        self.since_best = 0
        self.history = []

    def record(self, train_perf: float, val_perf: float) -> bool:
        """Log an epoch; returns True when training should stop."""
        if not (math.isfinite(train_perf) and math.isfinite(val_perf)):
            raise NonFiniteLossError(
                f"performance became non-finite at epoch {len(self.history) + 1}; "
                "lower the learning rate"
            )
        self.history.append((train_perf, val_perf))
        if val_perf < self.best:
            self.best = val_perf
            self.best_params = [p.copy() for p in self.params]
            self.best_epoch = len(self.history)
            self.since_best = 0
            return False
        self.since_best += 1
        return self.since_best >= self.patience

    def restore(self):
        for p, best in zip(self.params, self.best_params):
            p[...] = best


def _descend(model, x_tr, y_tr, x_va, y_va, cfg: TrainConfig) -> _EarlyStopping:
    params = [model.weights[0], model.biases[0], model.weights[1], model.biases[1]]
    optimizer = (_Adam if cfg.optimizer == "adam" else _Momentum)(params, cfg.momentum)
    stopper = _EarlyStopping(params, cfg.early_stop_patience)
    rng = np.random.default_rng(cfg.seed + 1)
    lr = cfg.learning_rate
    since_decay = 0

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.batch_size is None or cfg.batch_size >= len(x_tr):
            batches = [np.arange(len(x_tr))]
        else:
            order = rng.permutation(len(x_tr))
            batches = [order[i:i + cfg.batch_size] for i in range(0, len(x_tr), cfg.batch_size)]
        for idx in batches:
            objective, grads, _ = _backprop(model, x_tr[idx], y_tr[idx])
            if not math.isfinite(objective):
                raise NonFiniteLossError(
                    f"loss became non-finite at epoch {epoch}; lower the learning rate"
                )
            optimizer.step([g for pair in grads for g in pair], lr)

        best_before = stopper.best
        if stopper.record(mean_distance(model.activations(x_tr), y_tr),
                          mean_distance(model.activations(x_va), y_va)):
            break
        since_decay = 0 if stopper.best < best_before else since_decay + 1
        if since_decay >= cfg.lr_decay_patience:
            lr *= 0.5
            since_decay = 0
            optimizer.reset()
    return stopper


def _solve_output_layer(model: MlpModel, x: np.ndarray, y: np.ndarray, ridge: float):
    """Least-squares output weights for the current hidden layer, in place."""
    hidden = _activate(model.hidden_activation, x @ model.weights[0].T + model.biases[0])
    design = np.column_stack([hidden, np.ones(len(hidden))])
    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += ridge * len(design)
    try:
        coef = np.linalg.solve(gram, design.T @ y)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
    model.weights[1][...] = coef[:-1].T
    model.biases[1][...] = coef[-1]


def _project(model, x_tr, y_tr, x_va, y_va, cfg: TrainConfig) -> _EarlyStopping:
    from scipy.optimize import minimize

    w1, b1 = model.weights[0], model.biases[0]
    n_w = w1.size
    params = [w1, b1, model.weights[1], model.biases[1]]
    stopper = _EarlyStopping(params, cfg.early_stop_patience)

    def load(theta):
        w1.ravel()[...] = theta[:n_w]
        b1[...] = theta[n_w:]
        _solve_output_layer(model, x_tr, y_tr, cfg.output_ridge)

    def objective(theta):
        load(theta)
        value, grads, _ = _backprop(model, x_tr, y_tr)
        if not math.isfinite(value):
            raise NonFiniteLossError("loss became non-finite during training")
        # output layer is at its optimum, so only hidden-layer partials remain
        return value, np.concatenate([grads[0][0].ravel(), grads[0][1]])

    def after_iteration(theta):
        load(theta)
        if stopper.record(mean_distance(model.activations(x_tr), y_tr),
                          mean_distance(model.activations(x_va), y_va)):
            raise StopIteration

    theta0 = np.concatenate([w1.ravel(), b1])
    minimize(objective, theta0, jac=True, method="L-BFGS-B", callback=after_iteration,
             options={"maxiter": cfg.max_epochs, "ftol": 0.0, "gtol": 0.0})
    if not stopper.history:
        # converged before the first completed iteration
        load(theta0)
        stopper.record(mean_distance(model.activations(x_tr), y_tr),
                       mean_distance(model.activations(x_va), y_va))
    return stopper


def train(dataset: PsfDataset, cfg: TrainConfig) -> tuple[MlpModel, TrainReport]:
    """Fit a network to ``dataset``.

    The data is split 70/15/15 (by default) with a shuffle seeded from
    ``cfg.split_seed`` (falling back to ``cfg.seed``). Weights are initialised
    from ``cfg.seed``. The weights with the best validation score are
    returned; with too few samples for a validation set the training set
    stands in for it.
    """
    if len(dataset) < 2:
        raise InsufficientDataError("training needs at least two samples")
    k = dataset.grid_width
    if dataset.grid_height != k:
        raise DimensionMismatchError("training grids must be square")

    split_seed = cfg.seed if cfg.split_seed is None else cfg.split_seed
    tr, va, te = split_indices(len(dataset), cfg.validation_fraction, cfg.test_fraction,
                               split_seed)
    if len(va) == 0:
        va = tr

    norm = envelope_norm(dataset.fields[tr], cfg.azimuth_encoding)
    model = init_model(norm.shape[0], cfg.hidden_size, k * k, norm, (k, k, dataset.pitch_um),
                       cfg, cfg.seed)

    x_all = model.encode(dataset.fields)
    y_all = dataset.targets()
    x_tr, y_tr = x_all[tr], y_all[tr]
    x_va, y_va = x_all[va], y_all[va]

    fit = _project if cfg.optimizer == "projected" else _descend
    with np.errstate(over="ignore", invalid="ignore"):
        stopper = fit(model, x_tr, y_tr, x_va, y_va, cfg)
    stopper.restore()

    report = TrainReport(
        final_train_perf=mean_distance(model.activations(x_tr), y_tr),
        final_val_perf=mean_distance(model.activations(x_va), y_va),
        epochs_run=len(stopper.history),
        history=stopper.history,
        seed=cfg.seed,
        best_epoch=stopper.best_epoch,
        train_indices=tr,
        val_indices=va,
        test_indices=te,
    )
    log.debug("H=%d seed=%d: %d epochs, train %.4g, val %.4g", cfg.hidden_size, cfg.seed,
              report.epochs_run, report.final_train_perf, report.final_val_perf)
    return model, report


# -- serialization -------------------------------------------------------------

PSFN_MAGIC = b"PSFN"
PSFN_VERSION = 1
_ACT_NAMES = {v: k for k, v in HIDDEN_ACTIVATIONS.items()}
_OUT_NAMES = {v: k for k, v in OUTPUT_ACTIVATIONS.items()}


def serialize(model: MlpModel) -> bytes:
    """Little-endian ``.psfn`` encoding.

    ``"PSFN" | version u32 | n_layers u32 | sizes u32... | hidden act u8 |
    output act u8 | grid w u32, h u32, pitch f64 | (offset f64, scale f64)
    per input | per layer: weights f64 (out x in, row-major), biases f64``
    """
    parts = [
        PSFN_MAGIC,
        struct.pack("<II", PSFN_VERSION, len(model.layer_sizes)),
        struct.pack(f"<{len(model.layer_sizes)}I", *model.layer_sizes),
        struct.pack("<BB", HIDDEN_ACTIVATIONS[model.hidden_activation],
                    OUTPUT_ACTIVATIONS[model.output_activation]),
        struct.pack("<IId", *model.output_grid),
        model.input_norm.astype("<f8").tobytes(),
    ]
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f8").tobytes())
        parts.append(b.astype("<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise TruncatedFileError(f"model file truncated at byte {self.pos}")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def floats(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.pos + size > len(self.data):
            raise TruncatedFileError(f"model file truncated at byte {self.pos}")
        out = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.pos)
        self.pos += size
        return out.astype(np.float64)


def deserialize(data: bytes) -> MlpModel:
    if len(data) < 4 or data[:4] != PSFN_MAGIC:
        raise BadMagicError("not a PSF network file (bad magic)")
    r = _Reader(data)
    r.pos = 4
    version, n_layers = r.take("<II")
    if version != PSFN_VERSION:
        raise BadVersionError(f"unsupported model version {version}")
    if n_layers != 3:
        raise DimensionMismatchError(f"expected 3 layers, file declares {n_layers}")
    sizes = r.take(f"<{n_layers}I")
    hidden_code, output_code = r.take("<BB")
    if hidden_code not in _ACT_NAMES or output_code not in _OUT_NAMES:
        raise ValueError("unknown activation code in model file")
    width, height, pitch = r.take("<IId")
    norm = r.floats(2 * sizes[0]).reshape(sizes[0], 2)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(r.floats(n_in * n_out).reshape(n_out, n_in))
        biases.append(r.floats(n_out))
    return MlpModel(sizes, _ACT_NAMES[hidden_code], _OUT_NAMES[output_code], weights, biases,
                    norm, (width, height, pitch))


def save_model(path, model: MlpModel) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
