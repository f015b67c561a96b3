"""Binary and CSV emission of sampled grids.

Binary layout (little endian): a 32-byte header made of the magic ``KSGD``,
``version`` (u32), ``dims`` (u32) and up to five u32 axis counts (unused slots
are zero), followed by the values as row-major f64. A solver checkpoint stores
the time axis as the leading axis, so at most four space axes fit.
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"KSGD"
VERSION = 1
HEADER_SIZE = 32
_MAX_AXES = 5


def encode_grid(values) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim == 0 or values.ndim > _MAX_AXES:
        raise InputError(f"binary grids hold between 1 and {_MAX_AXES} axes")
    counts = list(values.shape) + [0] * (_MAX_AXES - values.ndim)
    header = MAGIC + struct.pack("<II5I", VERSION, values.ndim, *counts)
    assert len(header) == HEADER_SIZE
    return header + values.tobytes(order="C")


def decode_grid(blob: bytes) -> np.ndarray:
    if len(blob) < HEADER_SIZE or blob[:4] != MAGIC:
        raise InputError("not a KSGD grid")
    version, dims, *counts = struct.unpack("<II5I", blob[4:HEADER_SIZE])
    if version != VERSION or not (1 <= dims <= _MAX_AXES):
        raise InputError("unsupported KSGD header")
    shape = tuple(counts[:dims])
    body = np.frombuffer(blob, dtype="<f8", offset=HEADER_SIZE)
    if body.size != int(np.prod(shape)):
        raise InputError("KSGD payload size does not match the header")
    return body.reshape(shape).astype(float)


def write_grid(path, values) -> Path:
    path = Path(path)
    path.write_bytes(encode_grid(values))
    return path


def read_grid(path) -> np.ndarray:
    return decode_grid(Path(path).read_bytes())


def grid_csv_rows(axes, values):
    """One row per node: coordinates then value."""
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    return np.column_stack([coords, np.asarray(values).ravel()])


def format_table(header, rows, config_hash=None) -> str:
    """CSV text with a header line; a leading comment carries the config hash."""
    buf = io.StringIO()
    if config_hash is not None:
        buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_table(path, header, rows, config_hash=None) -> Path:
    path = Path(path)
    path.write_text(format_table(header, rows, config_hash), encoding="utf-8")
    return path
