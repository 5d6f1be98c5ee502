"""Brute-force references for testing.

Nothing here calls the production TT, tangent or coherence code paths; the
functions work on raw core lists and dense arrays with literal formulas.
They are slow and guarded by size limits.
"""

from __future__ import annotations

import itertools
from math import prod

import numpy as np

__all__ = [
    "naive_tt_entry",
    "naive_dense",
    "dense_tangent_basis",
    "dense_projector",
    "dense_opnorm",
    "best_rank_approx_d2",
    "BASIS_LIMIT",
    "PROJECTOR_LIMIT",
]

BASIS_LIMIT = 5000
PROJECTOR_LIMIT = 20000


def _cores(X):
    return [np.asarray(G, dtype=float) for G in getattr(X, "cores", X)]


def naive_tt_entry(cores, omega) -> float:
    """Entry at the 0-based multi-index ``omega`` by explicit summation over ranks."""
    cores = _cores(cores)
    ranks = [G.shape[0] for G in cores] + [cores[-1].shape[2]]
    total = 0.0
    for alphas in itertools.product(*(range(r) for r in ranks[1:-1])):
        a = (0,) + alphas + (0,)
        term = 1.0
        for k, G in enumerate(cores):
            term *= G[a[k], omega[k], a[k + 1]]
        total += term
    return float(total)


def naive_dense(cores) -> np.ndarray:
    """Full tensor built entry by entry with :func:`naive_tt_entry`."""
    cores = _cores(cores)
    shape = tuple(G.shape[1] for G in cores)
    out = np.empty(shape)
    for omega in itertools.product(*(range(n) for n in shape)):
        out[omega] = naive_tt_entry(cores, omega)
    return out


def _partial_left(cores, k):
    # dense (n_1..n_k) x r_k array of the first k cores, k = 0 gives ones(1, 1)
    out = np.ones((1, 1))
    for G in cores[:k]:
        r, n, s = G.shape
        nxt = np.zeros((out.shape[0] * n, s))
        # first-index-fastest: row index p + P * i
        P = out.shape[0]
        for i in range(n):
            nxt[i * P : (i + 1) * P] = out @ G[:, i, :]
        out = nxt
    return out


def _partial_right(cores, k):
    # dense r_{k} x (n_{k+1}..n_d) array of cores k+1..d (0-based: cores[k:])
    out = np.ones((1, 1))
    for G in reversed(cores[k:]):
        r, n, s = G.shape
        Q = out.shape[1]
        nxt = np.zeros((r, n * Q))
        # column index i + n * q
        for i in range(n):
            nxt[:, i::n] = G[:, i, :] @ out
        out = nxt
    return out


def dense_tangent_basis(X, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of the tangent space as columns of vectorized tensors.

    The columns of the Jacobian of ``(G_1, ..., G_d) -> TT(G_1, ..., G_d)``
    span the tangent space at a point of full TT-rank. The basis is the set
    of left singular vectors with singular value above ``tol * s_max``.
    Vectorization is first-index-fastest.
    """
    cores = _cores(X)
    d = len(cores)
    shape = tuple(G.shape[1] for G in cores)
    N = prod(shape)
    n_params = sum(G.size for G in cores)
    if n_params > BASIS_LIMIT or N > 4 * BASIS_LIMIT:
        raise ValueError("instance too large for the dense tangent basis oracle")
    cols = []
    for k in range(d):
        L = _partial_left(cores, k)  # (P, r_{k-1})
        R = _partial_right(cores, k + 1)  # (r_k, M)
        r, n, s = cores[k].shape
        for a in range(r):
            for i in range(n):
                for b in range(s):
                    e = np.zeros(n)
                    e[i] = 1.0
                    # tensor with F-order vectorization: kron(right, e_i, left)
                    cols.append(np.kron(R[b], np.kron(e, L[:, a])))
    J = np.array(cols).T
    U, svals, _ = np.linalg.svd(J, full_matrices=False)
    keep = svals > tol * svals[0]
    return U[:, keep]


def dense_projector(X) -> np.ndarray:
    """Matrix of the orthogonal projector onto the tangent space."""
    cores = _cores(X)
    if prod(G.shape[1] for G in cores) > PROJECTOR_LIMIT:
        raise ValueError("instance too large for the dense projector oracle")
    B = dense_tangent_basis(cores)
    return B @ B.T


def dense_opnorm(M) -> float:
    """Spectral norm of a symmetric matrix from its full eigendecomposition."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] > PROJECTOR_LIMIT:
        raise ValueError("matrix too large")
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(np.max(np.abs(ev)))


def best_rank_approx_d2(M, r: int) -> np.ndarray:
    """Best rank-``r`` approximation in Frobenius norm (truncated SVD)."""
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]
