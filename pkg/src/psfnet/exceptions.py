"""Exception types raised across the package."""


class PsfError(Exception):
    """Base class for all psfnet errors."""


class AllZeroGridError(PsfError, ValueError):
    """Grid has zero total intensity, so no centroid or volume is defined."""


class DimensionMismatchError(PsfError, ValueError):
    pass


class UpsampleNotSupportedError(PsfError, ValueError):
    pass


class InsufficientDataError(PsfError, ValueError):
    pass


class NonFiniteLossError(PsfError, ArithmeticError):
    """Training diverged; usually the learning rate is too high."""


class BadMagicError(PsfError, ValueError):
    pass


class BadVersionError(PsfError, ValueError):
    pass


class TruncatedFileError(PsfError, ValueError):
    pass


class BehindFocalPlaneError(PsfError, ValueError):
    """An object or focus distance does not exceed the focal length."""


class PitchMismatchError(PsfError, ValueError):
    """Kernel pitch differs from the image pitch it is applied to."""
