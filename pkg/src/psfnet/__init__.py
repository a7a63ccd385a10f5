"""Neural-network models of lens point spread functions and spatially-variant blur."""

__version__ = "0.1.0"

from .estimators import PsfPreprocessor, PsfRegressor
from .exceptions import (
    AllZeroGridError,
    BadMagicError,
    BadVersionError,
    BehindFocalPlaneError,
    DimensionMismatchError,
    InsufficientDataError,
    NonFiniteLossError,
    PitchMismatchError,
    PsfError,
    TruncatedFileError,
    UpsampleNotSupportedError,
)
from .grid import (
    FieldPoint,
    PsfDataset,
    PsfGrid,
    center_and_crop,
    centroid,
    flatten,
    normalize_volume,
    resample,
    unflatten,
)
from .io import read_dataset, read_pgm, write_dataset, write_pgm
from .metrics import EvalSummary, eq2_distance, evaluate, per_pixel_rmse
from .network import (
    MlpModel,
    TrainConfig,
    TrainReport,
    forward,
    gradient,
    load_model,
    loss,
    save_model,
    train,
)
from .render import (
    DefocusMap,
    FieldMapping,
    Image,
    convolve_spatially_variant,
    defocus_from_depth,
    pixel_to_field,
)
from .sweep import SweepReport, SweepRow, sweep
from .synth import PRESETS, SamplingGrid, SynthLensSpec, generate_dataset, synth_psf

__all__ = [name for name in dir() if not name.startswith("_")]
