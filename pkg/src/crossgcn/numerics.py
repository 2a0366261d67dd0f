"""Dense/sparse kernels, validators and seeded initializers.

Dense matrices are plain ``float64`` numpy arrays; sparse matrices are
canonical ``scipy.sparse.csr_matrix`` objects (sorted indices, no duplicate
entries, no stored zeros).  Random streams come from :func:`make_rng`, which
derives an independent Philox generator for every ``(seed, *stream)`` key.
"""

from __future__ import annotations

import zlib

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_dense(a) -> np.ndarray:
    """Return ``a`` as a 2-D float64 array (densifying sparse input)."""
    if sp.issparse(a):
        a = a.toarray()
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def to_csr(a) -> sp.csr_matrix:
    """Build a canonical CSR matrix from a dense array or any sparse format."""
    if sp.issparse(a):
        s = sp.csr_matrix(a, dtype=DTYPE, copy=True)
    else:
        s = sp.csr_matrix(np.asarray(a, dtype=DTYPE))
    s.sum_duplicates()
    s.eliminate_zeros()
    s.sort_indices()
    return s


def check_csr(s) -> None:
    """Validate the structural CSR invariants; raise ``ValueError`` on violation."""
    if not sp.isspmatrix_csr(s):
        raise ValueError(f"expected csr_matrix, got {type(s).__name__}")
    rows, cols = s.shape
    indptr, indices, data = s.indptr, s.indices, s.data
    if indptr.shape != (rows + 1,):
        raise ValueError("indptr must have length rows+1")
    if indptr[0] != 0 or indptr[-1] != data.size or indices.size != data.size:
        raise ValueError("indptr endpoints inconsistent with nnz")
    if np.any(np.diff(indptr) < 0):
        raise ValueError("indptr must be non-decreasing")
    if indices.size and (indices.min() < 0 or indices.max() >= cols):
        raise ValueError("column index out of range")
    # strictly increasing within a row: every within-row step is positive
    steps = np.diff(indices)
    row_start = np.zeros(indices.size, dtype=bool)
    row_start[indptr[:-1][np.diff(indptr) > 0]] = True
    if np.any(steps[~row_start[1:]] <= 0):
        raise ValueError("indices must be strictly increasing within each row")
    if np.any(data == 0):
        raise ValueError("explicit zeros stored")
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite values stored")


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return a


def spmm(s: sp.csr_matrix, d: np.ndarray) -> np.ndarray:
    """Sparse (CSR) times dense product, accumulated row by row."""
    d = np.asarray(d, dtype=DTYPE)
    if d.ndim != 2 or s.shape[1] != d.shape[0]:
        raise ShapeError(f"spmm: cannot multiply {s.shape} by {d.shape}")
    return _check_finite(np.asarray(s @ d), "spmm")


def dense_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return _check_finite(out, "matmul")


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a * b
    return _check_finite(out, "hadamard")


def row_normalize_sparse(s) -> sp.csr_matrix:
    """Divide each row by its sum; rows summing to zero are left untouched."""
    s = to_csr(s)
    sums = np.asarray(s.sum(axis=1)).ravel()
    sums[sums == 0] = 1.0
    # divide rather than multiply by 1/sum, which overflows for subnormal sums
    s.data = s.data / np.repeat(sums, np.diff(s.indptr))
    s.eliminate_zeros()
    return s


def stream_id(name: str) -> int:
    """Stable integer id for a named random stream."""
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an optional stream path.

    Stream components may be non-negative ints or strings; the same key
    always yields the same value sequence, and distinct keys give
    statistically independent streams.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for part in stream:
        key.append(stream_id(part) if isinstance(part, str) else int(part))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("glorot_init needs rows, cols >= 1")
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.standard_normal(n)
