"""Dense tensors and their matricizations.

Dense tensors are plain :class:`numpy.ndarray` objects. Every reshape in the
package uses Fortran (first-index-fastest) order, so entry ``(i1, ..., id)``
sits at flat offset ``i1 + n1*i2 + n1*n2*i3 + ...`` and the vectorization of a
canonical basis tensor is ``e_{id} (x) ... (x) e_{i1}``. With this layout the
k-th unfolding is a reshape with no data movement.

Mode numbers ``k`` and multi-indices passed to :func:`basis_tensor` are
1-based, as in the usual mathematical notation.
"""

from __future__ import annotations

from math import prod
from typing import Sequence

import numpy as np

__all__ = [
    "check_shape",
    "unfold",
    "flatten",
    "tensorize",
    "mode_product",
    "basis_tensor",
    "linear_index",
    "inner",
    "frob_norm",
]


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(n) for n in shape)
    if len(shape) < 2:
        raise ValueError(f"tensors need at least 2 modes, got shape {shape}")
    if any(n < 1 for n in shape):
        raise ValueError(f"all dimensions must be positive, got {shape}")
    return shape


def _as_tensor(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    check_shape(X.shape)
    return X


def unfold(X, k: int) -> np.ndarray:
    """k-th unfolding: rows index modes 1..k, columns modes k+1..d."""
    X = _as_tensor(X)
    d = X.ndim
    if not 1 <= k <= d - 1:
        raise ValueError(f"unfolding index must be in [1, {d - 1}], got {k}")
    rows = prod(X.shape[:k])
    return X.reshape(rows, -1, order="F")


def flatten(X, k: int) -> np.ndarray:
    """Mode-k flattening of size ``n_k x prod_{j != k} n_j``.

    Columns (mode-k fibers) are ordered first-index-fastest over the remaining
    modes.
    """
    X = _as_tensor(X)
    d = X.ndim
    if not 1 <= k <= d:
        raise ValueError(f"mode must be in [1, {d}], got {k}")
    return np.moveaxis(X, k - 1, 0).reshape(X.shape[k - 1], -1, order="F")


def tensorize(M, k: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = check_shape(shape)
    M = np.asarray(M, dtype=float)
    if not 1 <= k <= len(shape) - 1:
        raise ValueError(f"unfolding index must be in [1, {len(shape) - 1}], got {k}")
    expected = (prod(shape[:k]), prod(shape[k:]))
    if M.shape != expected:
        raise ValueError(f"matrix of shape {M.shape} cannot be tensorized to {shape} at k={k}")
    return M.reshape(shape, order="F")


def mode_product(X, k: int, B) -> np.ndarray:
    """``X x_k B``: contract mode k of ``X`` with the columns of ``B`` (m x n_k)."""
    X = _as_tensor(X)
    B = np.asarray(B, dtype=float)
    d = X.ndim
    if not 1 <= k <= d:
        raise ValueError(f"mode must be in [1, {d}], got {k}")
    if B.ndim != 2 or B.shape[1] != X.shape[k - 1]:
        raise ValueError(
            f"matrix of shape {B.shape} does not act on mode {k} of size {X.shape[k - 1]}"
        )
    Y = np.tensordot(B, X, axes=([1], [k - 1]))
    return np.moveaxis(Y, 0, k - 1)


def linear_index(omega: Sequence[int], shape: Sequence[int]) -> int:
    """0-based flat offset of the 1-based multi-index ``omega``."""
    shape = check_shape(shape)
    if len(omega) != len(shape):
        raise ValueError(f"multi-index {tuple(omega)} has wrong length for shape {shape}")
    offset, stride = 0, 1
    for i, n in zip(omega, shape):
        if not 1 <= i <= n:
            raise IndexError(f"multi-index {tuple(omega)} out of bounds for shape {shape}")
        offset += (i - 1) * stride
        stride *= n
    return offset


def basis_tensor(omega: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    shape = check_shape(shape)
    E = np.zeros(prod(shape))
    E[linear_index(omega, shape)] = 1.0
    return E.reshape(shape, order="F")


def inner(X, Y) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return float(np.vdot(X, Y))


def frob_norm(X) -> float:
    return float(np.linalg.norm(np.asarray(X, dtype=float).ravel()))
