"""Binary file formats: ``.psfd`` datasets and PGM (P5) images.

All ``.psfd`` fields are little-endian::

    "PSFD" | version u32 | count u32 | width u32 | height u32 | pitch_um f64
    then per sample: dz_um f64, r_mm f64, phi_deg f64, width*height f32
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .exceptions import BadMagicError, BadVersionError, TruncatedFileError
from .grid import PsfDataset

PSFD_MAGIC = b"PSFD"
PSFD_VERSION = 1
_PSFD_HEADER = struct.Struct("<4sIIIId")


def _sample_dtype(width: int, height: int) -> np.dtype:
    return np.dtype([("field", "<f8", (3,)), ("values", "<f4", (height * width,))])


def dumps_dataset(dataset: PsfDataset) -> bytes:
    h, w = dataset.grid_height, dataset.grid_width
    header = _PSFD_HEADER.pack(PSFD_MAGIC, PSFD_VERSION, len(dataset), w, h, dataset.pitch_um)
    records = np.empty(len(dataset), dtype=_sample_dtype(w, h))
    records["field"] = dataset.fields
    records["values"] = dataset.targets().astype("<f4")
    return header + records.tobytes()


def loads_dataset(data: bytes) -> PsfDataset:
    if len(data) < 4 or data[:4] != PSFD_MAGIC:
        raise BadMagicError("not a PSF dataset file (bad magic)")
    if len(data) < _PSFD_HEADER.size:
        raise TruncatedFileError("PSF dataset header is truncated")
    _, version, count, w, h, pitch = _PSFD_HEADER.unpack_from(data)
    if version != PSFD_VERSION:
        raise BadVersionError(f"unsupported PSF dataset version {version}")
    dtype = _sample_dtype(w, h)
    expected = _PSFD_HEADER.size + count * dtype.itemsize
    if len(data) < expected:
        raise TruncatedFileError(f"expected {expected} bytes, got {len(data)}")
    records = np.frombuffer(data, dtype=dtype, count=count, offset=_PSFD_HEADER.size)
    grids = records["values"].astype(np.float64).reshape(count, h, w)
    return PsfDataset(records["field"].astype(np.float64), grids, pitch)


def write_dataset(path: str | os.PathLike, dataset: PsfDataset) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_dataset(dataset))


def read_dataset(path: str | os.PathLike) -> PsfDataset:
    with open(path, "rb") as fh:
        return loads_dataset(fh.read())


# -- PGM ---------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments.

    Returns the integers and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    pos = 2
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValueError("malformed PGM header")
        tokens.append(int(data[start:pos]))
    if pos >= n:
        raise TruncatedFileError("PGM file ends inside its header")
    return tokens, pos


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a binary PGM into raw integer samples and the maxval."""
    if data[:2] != b"P5":
        raise BadMagicError("only binary PGM (P5) is supported")
    (width, height, maxval), pos = _pgm_tokens(data, 3)
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid PGM maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    start = pos + 1
    nbytes = width * height * dtype.itemsize
    if len(data) < start + nbytes:
        raise TruncatedFileError("PGM pixel data is truncated")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=start)
    return raw.reshape(height, width).astype(np.int64), maxval


def read_pgm_raw(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a PGM as float64 values in [0, 1]."""
    raw, maxval = read_pgm_raw(path)
    return raw / float(maxval)


def encode_pgm(values: np.ndarray, maxval: int = 65535) -> bytes:
    """Encode [0, 1] floats, rounding half up after scaling by ``maxval``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid PGM maxval {maxval}")
    scaled = np.floor(np.clip(values, 0.0, 1.0) * maxval + 0.5)
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    height, width = values.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + scaled.astype(dtype).tobytes()


def write_pgm(path: str | os.PathLike, values: np.ndarray, maxval: int = 65535) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(values, maxval))
