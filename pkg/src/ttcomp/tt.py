"""Tensor trains: TT-SVD, rounding, orthogonalization and interface matrices.

A tensor train is stored as a tuple of order-3 cores ``G_k`` of shape
``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_d = 1``. Left and right unfoldings of a
core are Fortran-order reshapes, matching the dense layout of
:mod:`ttcomp.tensor`:

* ``left_unfold(G)`` has shape ``(r_{k-1} n_k, r_k)``, row ``a + r_{k-1} i``;
* ``right_unfold(G)`` has shape ``(r_{k-1}, n_k r_k)``, column ``i + n_k b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np

from .tensor import check_shape, unfold

__all__ = [
    "TensorTrain",
    "left_unfold",
    "right_unfold",
    "core_from_left",
    "core_from_right",
    "tt_svd",
    "tt_round",
    "to_dense",
    "evaluate",
    "orthogonalize",
    "left_orthogonalize",
    "right_orthogonalize",
    "interface_left",
    "interface_right",
    "unfolding_singular_values",
    "tt_rank",
    "sigma_min_tt",
    "gaussian_tt",
    "tt_add",
    "tt_scale",
    "tt_norm",
    "RankDeficiencyError",
    "DENSE_SIZE_LIMIT",
]

# Guard for to_dense (number of entries).
DENSE_SIZE_LIMIT = 2**26

# Relative threshold below which singular values / R-diagonals count as zero.
RANK_EPS = 1e-14


class RankDeficiencyError(ValueError):
    """Raised when a TT representation turns out not to be minimal."""


def left_unfold(G: np.ndarray) -> np.ndarray:
    r, n, s = G.shape
    return G.reshape(r * n, s, order="F")


def right_unfold(G: np.ndarray) -> np.ndarray:
    r, n, s = G.shape
    return G.reshape(r, n * s, order="F")


def core_from_left(M: np.ndarray, r: int, n: int) -> np.ndarray:
    return np.asarray(M).reshape(r, n, -1, order="F")


def core_from_right(M: np.ndarray, n: int, s: int) -> np.ndarray:
    return np.asarray(M).reshape(-1, n, s, order="F")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="F", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TensorTrain:
    """Immutable tensor train.

    ``ortho[k]`` is ``"left"``, ``"right"`` or ``"none"`` and records which
    orthogonality the k-th core is known to satisfy. It is bookkeeping only;
    nothing is re-checked on construction.
    """

    cores: tuple
    ortho: tuple = field(default=None)

    def __post_init__(self):
        cores = tuple(_frozen(G) for G in self.cores)
        if len(cores) < 2:
            raise ValueError("a tensor train needs at least two cores")
        for k, G in enumerate(cores):
            if G.ndim != 3:
                raise ValueError(f"core {k + 1} must be order 3, got shape {G.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks r_0 and r_d must equal 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {k + 1} and {k + 2}: "
                    f"{cores[k].shape} vs {cores[k + 1].shape}"
                )
        ortho = self.ortho if self.ortho is not None else ("none",) * len(cores)
        if len(ortho) != len(cores):
            raise ValueError("one orthogonality flag per core is required")
        object.__setattr__(self, "cores", cores)
        object.__setattr__(self, "ortho", tuple(ortho))

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(G.shape[1] for G in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Internal ranks ``(r_1, ..., r_{d-1})``."""
        return tuple(G.shape[2] for G in self.cores[:-1])

    @property
    def full_ranks(self) -> tuple[int, ...]:
        return (1,) + self.ranks + (1,)

    def __repr__(self) -> str:
        return f"TensorTrain(shape={self.shape}, ranks={self.ranks})"


def _check_ranks(shape: Sequence[int], r) -> tuple[int, ...]:
    d = len(shape)
    if np.isscalar(r):
        r = (int(r),) * (d - 1)
    r = tuple(int(x) for x in r)
    if len(r) != d - 1:
        raise ValueError(f"rank tuple must have length {d - 1}, got {r}")
    if any(x < 1 for x in r):
        raise ValueError(f"ranks must be positive, got {r}")
    return r


def _truncated_svd(M: np.ndarray, rank: int):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    rank = min(rank, s.size)
    tail = float(np.sum(s[rank:] ** 2))
    return U[:, :rank], s[:rank], Vt[:rank], tail


def tt_svd(X, r, return_tails: bool = False):
    """Truncated TT-SVD of a dense tensor.

    Ranks are capped by what each step can support, never inflated. Singular
    directions with zero singular value are kept when the requested rank asks
    for them, so the output always has the left-orthogonal structure.

    With ``return_tails=True`` also returns the squared discarded singular
    values per step; their sum bounds the squared approximation error.
    """
    X = np.asarray(X, dtype=float)
    shape = check_shape(X.shape)
    r = _check_ranks(shape, r)
    d = len(shape)
    cores, tails = [], []
    C = X.reshape(shape[0], -1, order="F")
    r_prev = 1
    for k in range(d - 1):
        U, s, Vt, tail = _truncated_svd(C, r[k])
        rk = U.shape[1]
        cores.append(core_from_left(U, r_prev, shape[k]))
        tails.append(tail)
        C = (s[:, None] * Vt).reshape(rk * shape[k + 1], -1, order="F")
        r_prev = rk
    cores.append(C.reshape(r_prev, shape[-1], 1, order="F"))
    tt = TensorTrain(cores, ortho=("left",) * (d - 1) + ("none",))
    if return_tails:
        return tt, np.array(tails)
    return tt


def _qr_left_step(G: np.ndarray, check: bool):
    r, n, s = G.shape
    Q, R = np.linalg.qr(left_unfold(G))
    if check:
        diag = np.abs(np.diag(R))
        if r * n < s or (diag.size and diag.min() <= RANK_EPS * max(diag.max(), 1e-300)):
            raise RankDeficiencyError(
                "left unfolding is rank deficient; the representation is not minimal"
            )
    return core_from_left(Q, r, n), R


def _qr_right_step(G: np.ndarray, check: bool):
    r, n, s = G.shape
    Q, R = np.linalg.qr(right_unfold(G).T)
    if check:
        diag = np.abs(np.diag(R))
        if n * s < r or (diag.size and diag.min() <= RANK_EPS * max(diag.max(), 1e-300)):
            raise RankDeficiencyError(
                "right unfolding is rank deficient; the representation is not minimal"
            )
    return core_from_right(Q.T, n, s), R.T


def _absorb_right(G: np.ndarray, R: np.ndarray) -> np.ndarray:
    # R @ G along the left rank index
    return np.einsum("ab,bns->ans", R, G)


def _absorb_left(G: np.ndarray, L: np.ndarray) -> np.ndarray:
    # G @ L along the right rank index
    return np.einsum("ans,sb->anb", G, L)


def orthogonalize(X: TensorTrain, k: int, check: bool = True) -> TensorTrain:
    """k-orthogonal representation (1-based ``k``).

    Cores ``1..k-1`` become left-orthogonal and ``k+1..d`` right-orthogonal;
    core ``k`` carries the norm. ``k = d`` gives the left-orthogonal and
    ``k = 1`` the right-orthogonal representation. With ``check=True`` a
    rank-deficient unfolding raises :class:`RankDeficiencyError`.
    """
    d = X.d
    if not 1 <= k <= d:
        raise ValueError(f"orthogonality center must be in [1, {d}], got {k}")
    cores = list(X.cores)
    for j in range(k - 1):
        cores[j], R = _qr_left_step(cores[j], check)
        cores[j + 1] = _absorb_right(cores[j + 1], R)
    for j in range(d - 1, k - 1, -1):
        cores[j], L = _qr_right_step(cores[j], check)
        cores[j - 1] = _absorb_left(cores[j - 1], L)
    ortho = ("left",) * (k - 1) + ("none",) + ("right",) * (d - k)
    return TensorTrain(cores, ortho=ortho)


def left_orthogonalize(X: TensorTrain, check: bool = True) -> TensorTrain:
    return orthogonalize(X, X.d, check=check)


def right_orthogonalize(X: TensorTrain, check: bool = True) -> TensorTrain:
    return orthogonalize(X, 1, check=check)


def tt_round(X: TensorTrain, r, return_singular_values: bool = False):
    """Truncated TT-SVD of a tensor already in TT form.

    Right-to-left QR sweep followed by a left-to-right truncated SVD sweep;
    mathematically the same map as ``tt_svd(to_dense(X), r)`` at
    ``O(d n r^3)`` cost. Output is left-orthogonal in cores ``1..d-1``.

    With ``return_singular_values=True`` also returns the full list of
    singular values seen at each cut (before truncation).
    """
    r = _check_ranks(X.shape, r)
    d = X.d
    cores = list(right_orthogonalize(X, check=False).cores)
    svals = []
    for k in range(d - 1):
        G = cores[k]
        rp, n, _ = G.shape
        U, s, Vt = np.linalg.svd(left_unfold(G), full_matrices=False)
        svals.append(s)
        keep = min(r[k], s.size)
        cores[k] = core_from_left(U[:, :keep], rp, n)
        cores[k + 1] = _absorb_right(cores[k + 1], s[:keep, None] * Vt[:keep])
    out = TensorTrain(cores, ortho=("left",) * (d - 1) + ("none",))
    if return_singular_values:
        return out, svals
    return out


def to_dense(X: TensorTrain, max_size: int = DENSE_SIZE_LIMIT) -> np.ndarray:
    size = prod(X.shape)
    if size > max_size:
        raise MemoryError(f"dense tensor of {size} entries exceeds the limit of {max_size}")
    M = left_unfold(X.cores[0])
    for G in X.cores[1:]:
        r, n, s = G.shape
        M = np.einsum("pa,ais->pis", M, G).reshape(-1, s, order="F")
    return M.reshape(X.shape, order="F")


def evaluate(X: TensorTrain, indices, factors=None) -> np.ndarray:
    """Entries of ``X`` at 0-based multi-indices (array of shape ``(S, d)``).

    ``factors``, if given, is a sequence of matrices ``F_k`` (``N_k x n_k``) and
    the entries returned are those of ``X x_1 F_1 ... x_d F_d`` at indices into
    the larger shape ``(N_1, ..., N_d)``. Cost is ``O(S d r^2)`` plus the
    core contractions with ``F_k``; nothing is densified.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[1] != X.d:
        raise ValueError(f"indices must have shape (S, {X.d}), got {idx.shape}")
    v = np.ones((idx.shape[0], 1))
    for k, G in enumerate(X.cores):
        if factors is not None and factors[k] is not None:
            G = np.einsum("ij,ajb->aib", factors[k], G)
        v = np.einsum("sa,asb->sb", v, G[:, idx[:, k], :])
    return v[:, 0]


def interface_left(X: TensorTrain, k: int) -> np.ndarray:
    """``X_{<=k}`` of shape ``(n_1 ... n_k, r_k)``."""
    if not 1 <= k <= X.d - 1:
        raise ValueError(f"interface index must be in [1, {X.d - 1}], got {k}")
    M = left_unfold(X.cores[0])
    for G in X.cores[1:k]:
        M = np.einsum("pa,ais->pis", M, G).reshape(-1, G.shape[2], order="F")
    return M


def interface_right(X: TensorTrain, k: int) -> np.ndarray:
    """``X_{>=k+1}`` of shape ``(n_{k+1} ... n_d, r_k)``."""
    if not 1 <= k <= X.d - 1:
        raise ValueError(f"interface index must be in [1, {X.d - 1}], got {k}")
    M = right_unfold(X.cores[-1]).T
    for G in reversed(X.cores[k:-1]):
        M = np.einsum("qb,aib->iqa", M, G).reshape(-1, G.shape[0], order="F")
    return M


def unfolding_singular_values(X) -> list[np.ndarray]:
    """Singular values of every unfolding ``X^<k>``, ``k = 1..d-1``.

    Works on dense tensors directly and on tensor trains through a QR sweep
    (``X^<k> = U_<=k R V_>=k+1^T`` with orthonormal outer factors).
    """
    if isinstance(X, TensorTrain):
        cores = list(right_orthogonalize(X, check=False).cores)
        out = []
        for k in range(X.d - 1):
            M = left_unfold(cores[k])
            out.append(np.linalg.svd(M, compute_uv=False))
            Q, R = np.linalg.qr(M)
            cores[k + 1] = _absorb_right(cores[k + 1], R)
            cores[k] = core_from_left(Q, cores[k].shape[0], cores[k].shape[1])
        return out
    X = np.asarray(X, dtype=float)
    return [np.linalg.svd(unfold(X, k), compute_uv=False) for k in range(1, X.ndim)]


def tt_rank(X, tol: float = 1e-10) -> tuple[int, ...]:
    """Numerical TT-rank: singular values above ``tol * sigma_max`` per unfolding."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    ranks = []
    for s in unfolding_singular_values(X):
        if s.size == 0 or s[0] == 0.0:
            ranks.append(0)
        else:
            ranks.append(int(np.sum(s > tol * s[0])))
    return tuple(ranks)


def sigma_min_tt(X) -> float:
    """Harmonic-mean-type combination ``(sum_k 1 / sigma_min(X^<k>))^{-1}``.

    ``sigma_min`` is the smallest *positive* singular value, positive meaning
    above ``1e-14`` times the largest one.
    """
    total = 0.0
    for s in unfolding_singular_values(X):
        if s.size == 0 or s[0] == 0.0:
            raise ValueError("sigma_min is undefined for the zero tensor")
        positive = s[s > RANK_EPS * s[0]]
        total += 1.0 / positive[-1]
    return 1.0 / total


def gaussian_tt(shape: Sequence[int], r, seed) -> TensorTrain:
    """TT with i.i.d. standard normal cores.

    Draws come from numpy's PCG64 generator (``numpy.random.default_rng``)
    seeded with ``seed``; cores are filled in order ``1..d``, each as one
    ``standard_normal`` call of shape ``(r_{k-1}, n_k, r_k)``.
    """
    shape = check_shape(shape)
    r = _check_ranks(shape, r)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    full = (1,) + r + (1,)
    cores = [rng.standard_normal((full[k], shape[k], full[k + 1])) for k in range(len(shape))]
    return TensorTrain(cores)


def tt_add(X: TensorTrain, Y: TensorTrain) -> TensorTrain:
    """Exact sum with block cores; ranks add."""
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    d = X.d
    cores = []
    for k, (A, B) in enumerate(zip(X.cores, Y.cores)):
        ra, n, sa = A.shape
        rb, _, sb = B.shape
        if k == 0:
            C = np.concatenate([A, B], axis=2)
        elif k == d - 1:
            C = np.concatenate([A, B], axis=0)
        else:
            C = np.zeros((ra + rb, n, sa + sb))
            C[:ra, :, :sa] = A
            C[ra:, :, sa:] = B
        cores.append(C)
    return TensorTrain(cores)


def tt_scale(X: TensorTrain, a: float) -> TensorTrain:
    cores = list(X.cores)
    cores[-1] = a * cores[-1]
    return TensorTrain(cores, ortho=X.ortho[:-1] + ("none",))


def tt_norm(X: TensorTrain) -> float:
    Y = left_orthogonalize(X, check=False)
    return float(np.linalg.norm(Y.cores[-1]))
