"""Series files and JSON sidecars.

A series file is an 8-byte magic, little-endian ``u32`` length ``T`` and
``u32`` node count ``N``, then ``T * N`` little-endian ``f64`` values in
row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GSSERIES"
_HEADER = struct.Struct("<8sII")


class DataError(ValueError):
    """A data file is missing or malformed."""


def write_series(path, values) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("series must be a T x N array")
    t, n = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, t, n))
        fh.write(values.tobytes(order="C"))


def read_series(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"series file {path} not found")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path} is too short to hold a header")
    magic, t, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path} has bad magic {magic!r}")
    expected = _HEADER.size + 8 * t * n
    if len(raw) != expected:
        raise DataError(f"{path} holds {len(raw)} bytes, header implies {expected}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(t, n).astype(float)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path} contains non-finite values")
    return values


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n")


def load_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path} not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
