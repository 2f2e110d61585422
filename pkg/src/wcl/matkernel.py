"""Dense float64 matrix primitives and the WCLE binary matrix format.

Matrices are plain C-contiguous ``numpy.float64`` arrays. Every public
function is pure: inputs are never modified and a fresh array is returned.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import DimensionMismatch, EmptyInput, MalformedFile, ZeroRowError

NORM_FLOOR = 1e-12
UNIT_TOL = 1e-9
WCLE_MAGIC = b"WCLE"
_HEADER = struct.Struct("<4sII")


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a 2-D C-contiguous float64 array (copying if needed)."""
    arr = np.array(m, dtype=np.float64, order="C", ndmin=2)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row of ``m`` to unit Euclidean norm.

    Raises:
        ZeroRowError: if any row has norm below ``NORM_FLOOR``.
    """
    arr = as_matrix(m)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise EmptyInput("cannot normalize an empty matrix")
    norms = np.linalg.norm(arr, axis=1)
    bad = np.flatnonzero(norms < NORM_FLOOR)
    if bad.size:
        raise ZeroRowError(f"row {int(bad[0])} has norm {norms[bad[0]]:.3g} < {NORM_FLOOR}")
    return arr / norms[:, None]


def normalize_backward(unit: np.ndarray, norms: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    """Pull a gradient back through row normalization ``u -> u / |u|``.

    ``unit`` is the normalized output and ``norms`` the pre-normalization row
    norms. The result is orthogonal to ``unit`` row-wise.
    """
    radial = np.sum(unit * grad_unit, axis=1, keepdims=True)
    return (grad_unit - unit * radial) / norms[:, None]


def check_unit_rows(m: np.ndarray, tol: float = UNIT_TOL) -> None:
    norms = np.linalg.norm(m, axis=1)
    if m.shape[0] < 1 or not np.all(np.abs(norms - 1.0) <= tol):
        raise ZeroRowError("embedding batch rows must have unit L2 norm")


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """Pairwise dot products of two unit-row batches, ``out[i, j] = <a_i, b_j>``."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


def log_softmax_row(v) -> np.ndarray:
    """Numerically stable log-softmax of a 1-D sequence."""
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInput("log_softmax_row needs at least one value")
    shifted = arr - arr.max()
    return shifted - np.log(np.sum(np.exp(shifted)))


def log_softmax_rows(m: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise log-softmax of ``m`` over the entries where ``mask`` is True.

    Masked-out entries come back as ``-inf``. Each row must keep at least one
    entry.
    """
    m = np.asarray(m, dtype=np.float64)
    if mask is None:
        masked = m
    else:
        masked = np.where(mask, m, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    shifted = masked - top
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def write_wcle(path: str | os.PathLike, m) -> None:
    """Write ``m`` as WCLE: magic, u32 rows, u32 cols, float32 row-major payload."""
    arr = as_matrix(m)
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WCLE_MAGIC, rows, cols))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_wcle(path: str | os.PathLike) -> np.ndarray:
    """Load a WCLE file, widening the payload to float64.

    Raises:
        MalformedFile: bad magic, truncated payload, or trailing bytes.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise MalformedFile(f"{path}: file shorter than the WCLE header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != WCLE_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise MalformedFile(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size, count=rows * cols)
    return data.astype(np.float64).reshape(rows, cols)
