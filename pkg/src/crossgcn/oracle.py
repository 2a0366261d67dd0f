"""Brute-force reference implementations used to check the factorized layer.

Nothing here is used on the training path.  Tensors are materialized in
full, so every function enforces a hard size cap (``MAX_ENTRIES``).

Axis convention for rank-1 tensors: the i-th factor passed to
``rank1_tensor_from_factors`` spans axis i.  The factorized layer computes
``(W^k x) * ... * (W^1 x)``, whose matching tensor is
``rank1_tensor_from_factors(w^k, ..., w^1)``.
"""

from __future__ import annotations

import itertools

import numpy as np

MAX_ENTRIES = 10**6


class TensorTooLarge(ValueError):
    pass


def _check_cap(dim: int, order: int) -> None:
    if order < 1:
        raise ValueError("order must be >= 1")
    if dim**order > MAX_ENTRIES:
        raise TensorTooLarge(f"{dim}^{order} entries exceeds cap of {MAX_ENTRIES}")


def enumerate_cross_tensor(x, k: int) -> np.ndarray:
    """All ``k``-order cross features of ``x``, one entry per index tuple."""
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x.size
    _check_cap(d, k)
    out = np.empty((d,) * k)
    for idx in itertools.product(range(d), repeat=k):
        v = 1.0
        for i in idx:
            v *= x[i]
        out[idx] = v
    return out


def rank1_tensor_from_factors(*factors) -> np.ndarray:
    """Outer product of the factors, first factor on axis 0."""
    if not factors:
        raise ValueError("need at least one factor")
    fs = [np.asarray(f, dtype=np.float64).ravel() for f in factors]
    d = fs[0].size
    if any(f.size != d for f in fs):
        raise ValueError("factors must have equal length")
    k = len(fs)
    _check_cap(d, k)
    out = np.empty((d,) * k)
    for idx in itertools.product(range(d), repeat=k):
        v = 1.0
        for axis, i in enumerate(idx):
            v *= fs[axis][i]
        out[idx] = v
    return out


def brute_force_cross_transform(x, weight_tensors, b=None) -> np.ndarray:
    """``h_e = sum(X^k * W_e) + b_e`` by explicit summation over all entries."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if not weight_tensors:
        raise ValueError("need at least one weight tensor")
    k = np.ndim(weight_tensors[0])
    for w in weight_tensors:
        if np.shape(w) != (x.size,) * k:
            raise ValueError(f"weight tensor shape {np.shape(w)} does not match D={x.size}, k={k}")
    cross = enumerate_cross_tensor(x, k)
    e = len(weight_tensors)
    b = np.zeros(e) if b is None else np.asarray(b, dtype=np.float64).ravel()
    if b.size != e:
        raise ValueError("bias length must equal number of output units")
    h = np.empty(e)
    for j, w in enumerate(weight_tensors):
        total = 0.0
        for idx in itertools.product(range(x.size), repeat=k):
            total += cross[idx] * w[idx]
        h[j] = total + b[j]
    return h


def finite_difference_gradients(f, theta, step: float = 1e-6) -> np.ndarray:
    """Central differences ``(f(t + h e_i) - f(t - h e_i)) / 2h`` per coordinate."""
    theta = np.array(theta, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        fp = float(f(theta.copy()))
        theta[i] = orig - step
        fm = float(f(theta.copy()))
        theta[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(a, b, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``||a - b|| / max(||a||, ||b||, floor)``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
