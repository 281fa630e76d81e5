"""Matrix file I/O: the KMAT1 binary layout and plain CSV.

KMAT1 is the 5 ASCII bytes ``KMAT1``, then rows and cols as little-endian
uint64, then ``rows*cols`` little-endian float64 values in column-major order.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"KMAT1"
_HEADER = struct.Struct("<QQ")


class MatrixFormatError(ValueError):
    pass


def detect_format(path, explicit: str | None = None) -> str:
    if explicit:
        if explicit not in ("kmat", "csv"):
            raise ValueError(f"unknown matrix format {explicit!r}")
        return explicit
    return "csv" if str(path).lower().endswith(".csv") else "kmat"


def encode_kmat(a) -> bytes:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("only matrices can be written")
    rows, cols = a.shape
    body = np.asarray(a, dtype="<f8").tobytes(order="F")
    return MAGIC + _HEADER.pack(rows, cols) + body


def decode_kmat(data: bytes) -> np.ndarray:
    if len(data) < len(MAGIC) + _HEADER.size or data[: len(MAGIC)] != MAGIC:
        raise MatrixFormatError("missing KMAT1 magic bytes")
    rows, cols = _HEADER.unpack_from(data, len(MAGIC))
    offset = len(MAGIC) + _HEADER.size
    expected = offset + 8 * rows * cols
    if len(data) != expected:
        raise MatrixFormatError(f"KMAT1 payload is {len(data)} bytes, expected {expected} for {rows}x{cols}")
    flat = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
    return flat.reshape((rows, cols), order="F").astype(np.float64)


def encode_csv(a) -> bytes:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    buf = io.StringIO()
    for row in a:
        # repr round-trips float64 exactly
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue().encode("ascii")


def decode_csv(data: bytes) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise MatrixFormatError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise MatrixFormatError("CSV file holds no rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MatrixFormatError("CSV rows have different lengths")
    # column-major like KMAT1 so both formats hand identical layouts to BLAS
    return np.asfortranarray(np.array(rows, dtype=np.float64))


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    data = Path(path).read_bytes()
    return decode_csv(data) if detect_format(path, fmt) == "csv" else decode_kmat(data)


def write_matrix(path, a, fmt: str | None = None) -> None:
    fmt = detect_format(path, fmt)
    Path(path).write_bytes(encode_csv(a) if fmt == "csv" else encode_kmat(a))
