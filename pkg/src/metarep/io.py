"""Binary matrix container and small JSON helpers.

Matrix file layout (all little-endian)::

    offset  size  field
    0       8     magic  b"MREPMAT\\0"
    8       4     uint32 format version (1)
    12      4     uint32 reserved (0)
    16      8     uint64 rows
    24      8     uint64 cols
    32      8*rows*cols  float64 payload, row-major

Vectors are stored as ``rows x 1`` matrices.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MREPMAT\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ")


def write_matrix(path, a) -> None:
    a = np.asarray(a, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("only vectors and matrices can be stored")
    rows, cols = a.shape
    tmp = Path(f"{path}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, rows, cols))
        fh.write(np.ascontiguousarray(a).tobytes())
    os.replace(tmp, path)


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a matrix header")
    magic, version, _, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a metarep matrix file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, expected {8 * rows * cols}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)


def read_vector(path) -> np.ndarray:
    return read_matrix(path)[:, 0]


def write_json(path, obj) -> None:
    tmp = Path(f"{path}.tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_json(path):
    return json.loads(Path(path).read_text())


def write_matrix_csv(path, a, header=None) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
