"""Tangent spaces of the fixed-rank TT manifold.

A tangent vector at ``X = [U_1, ..., U_{d-1}, G_d] = [G_1, V_2, ..., V_d]`` is
stored through its gauge cores ``Y_1, ..., Y_d``::

    Y = sum_k [U_1, ..., U_{k-1}, Y_k, V_{k+1}, ..., V_d],

with ``U_k^L.T @ Y_k^L = 0`` for ``k < d``. In this parametrization the map
gauges -> tensor is an isometry, so inner products and norms of tangent
vectors are computed on the gauges alone.

:class:`ProjectorHandle` holds both orthogonal forms of the base point and
applies the orthogonal projector onto the tangent space to dense tensors,
tensor trains and sparse sample sets (the latter at ``O(S d r^2)`` cost, never
densifying).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import prod

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from .tensor import check_shape, frob_norm, tensorize, unfold
from .tt import (
    TensorTrain,
    core_from_left,
    left_orthogonalize,
    left_unfold,
    right_orthogonalize,
    right_unfold,
    sigma_min_tt,
    to_dense,
    tt_add,
    tt_norm,
    tt_scale,
)

__all__ = [
    "ProjectorHandle",
    "TangentVector",
    "embed",
    "tangent_axpy",
    "tangent_inner",
    "tangent_norm",
    "curvature_gap",
    "projector_distance",
    "EXACT_DISTANCE_LIMIT",
]

GAUGE_DRIFT_TOL = 1e-10
EXACT_DISTANCE_LIMIT = 20000


@dataclass(frozen=True)
class TangentVector:
    handle: "ProjectorHandle"
    gauges: tuple

    @property
    def shape(self):
        return self.handle.shape

    def gauge_residual(self) -> float:
        """Largest ``||U_k^L.T Y_k^L||`` over ``k < d``; zero for a valid vector."""
        res = 0.0
        for U, Y in zip(self.handle.left_cores[:-1], self.gauges[:-1]):
            res = max(res, float(np.linalg.norm(left_unfold(U).T @ left_unfold(Y))))
        return res


class ProjectorHandle:
    """Orthogonal projector onto the tangent space at a fixed-rank TT.

    Parameters
    ----------
    base : TensorTrain
        Base point. It is brought to left- and right-orthogonal form once at
        construction; both forms represent the same tensor.
    """

    def __init__(self, base: TensorTrain):
        left = left_orthogonalize(base, check=False)
        right = right_orthogonalize(left, check=False)
        self.base = left
        self.left_cores = left.cores
        self.right_cores = right.cores
        self.shape = base.shape
        self.d = base.d
        self.ranks = left.full_ranks

    # ------------------------------------------------------------------ basics
    @property
    def dimension(self) -> int:
        r, n = self.ranks, self.shape
        return sum(r[k] * n[k] * r[k + 1] for k in range(self.d)) - sum(
            x * x for x in r[1:-1]
        )

    def _gauge_fix(self, cores):
        out = []
        for k, W in enumerate(cores):
            if k == self.d - 1:
                out.append(W)
                continue
            U = left_unfold(self.left_cores[k])
            M = left_unfold(W)
            M = M - U @ (U.T @ M)
            drift = np.linalg.norm(U.T @ M)
            if drift > GAUGE_DRIFT_TOL * max(np.linalg.norm(M), 1.0):
                M = M - U @ (U.T @ M)
            out.append(core_from_left(M, W.shape[0], W.shape[1]))
        return TangentVector(self, tuple(out))

    def zero(self) -> TangentVector:
        return TangentVector(self, tuple(np.zeros_like(U) for U in self.left_cores))

    def base_as_tangent(self) -> TangentVector:
        """The base point itself as a tangent vector (only the last gauge is set)."""
        gauges = [np.zeros_like(U) for U in self.left_cores]
        gauges[-1] = np.array(self.left_cores[-1])
        return TangentVector(self, tuple(gauges))

    # ------------------------------------------------------------- interfaces
    @cached_property
    def _left_interfaces(self):
        # mats[k] = U_{<=k} for k = 0..d-1 (U_{<=0} = [[1]])
        mats = [np.ones((1, 1))]
        for U in self.left_cores[:-1]:
            M = mats[-1]
            mats.append(np.einsum("pa,ais->pis", M, U).reshape(-1, U.shape[2], order="F"))
        return mats

    @cached_property
    def _right_interfaces(self):
        # mats[k] = V_{>=k+1} for k = 1..d, stored at position k-1; V_{>=d+1} = [[1]]
        mats = [np.ones((1, 1))]
        for V in reversed(self.right_cores[1:]):
            M = mats[-1]
            mats.append(np.einsum("qb,aib->iqa", M, V).reshape(-1, V.shape[0], order="F"))
        return mats[::-1]

    def interface_basis_left(self, k: int) -> np.ndarray:
        """Orthonormal ``U_{<=k}``, ``k = 0..d-1``."""
        return self._left_interfaces[k]

    def interface_basis_right(self, k: int) -> np.ndarray:
        """Orthonormal ``V_{>=k+1}``, ``k = 1..d``."""
        return self._right_interfaces[k - 1]

    # ------------------------------------------------------------- projection
    def project(self, Z) -> TangentVector:
        """Project a dense tensor, a tensor train or sparse observations."""
        if isinstance(Z, TensorTrain):
            return self.project_tt(Z)
        if hasattr(Z, "sample") and hasattr(Z, "values"):
            return self.project_sparse(Z.sample.indices, Z.values)
        return self.project_dense(Z)

    def project_dense(self, Z) -> TangentVector:
        Z = np.asarray(Z, dtype=float)
        if Z.shape != self.shape:
            raise ValueError(f"shape mismatch: {Z.shape} vs base {self.shape}")
        n = self.shape
        cores = []
        for k in range(self.d):
            L = self._left_interfaces[k]
            R = self._right_interfaces[k]
            P, M = prod(n[:k]), prod(n[k + 1 :])
            T = L.T @ Z.reshape(P, n[k] * M, order="F")
            T = T.reshape(L.shape[1] * n[k], M, order="F") @ R
            cores.append(core_from_left(T, L.shape[1], n[k]))
        return self._gauge_fix(cores)

    def project_tt(self, Z: TensorTrain) -> TangentVector:
        if Z.shape != self.shape:
            raise ValueError(f"shape mismatch: {Z.shape} vs base {self.shape}")
        d = self.d
        # lefts[k]: (U-rank, Z-rank) left contraction; rights[k]: (Z-rank, V-rank) right one
        lefts = [np.ones((1, 1))]
        for U, C in zip(self.left_cores[:-1], Z.cores[:-1]):
            lefts.append(np.einsum("ab,aic,bid->cd", lefts[-1], U, C))
        rights = [np.ones((1, 1))]
        for V, C in zip(reversed(self.right_cores[1:]), reversed(Z.cores[1:])):
            rights.append(np.einsum("dc,aic,bid->ba", rights[-1], V, C))
        rights = rights[::-1]
        cores = [
            np.einsum("ab,bic,cd->aid", lefts[k], Z.cores[k], rights[k]) for k in range(d)
        ]
        return self._gauge_fix(cores)

    def _contracted(self, cores, factors):
        if factors is None:
            return cores
        return tuple(
            G if F is None else np.einsum("im,amb->aib", F, G) for G, F in zip(cores, factors)
        )

    def _sample_frames(self, idx, factors=None):
        """Per-sample rows of ``U_{<=k-1}`` and ``V_{>=k+1}`` at the sample indices."""
        idx = np.asarray(idx, dtype=np.intp)
        S = idx.shape[0]
        Uc = self._contracted(self.left_cores, factors)
        Vc = self._contracted(self.right_cores, factors)
        lefts = [np.ones((S, 1))]
        for k in range(self.d - 1):
            lefts.append(np.einsum("sa,asb->sb", lefts[-1], Uc[k][:, idx[:, k], :]))
        rights = [np.ones((S, 1))]
        for k in range(self.d - 1, 0, -1):
            rights.append(np.einsum("asb,sb->sa", Vc[k][:, idx[:, k], :], rights[-1]))
        return lefts, rights[::-1]

    def project_sparse(self, indices, values, factors=None, big_shape=None) -> TangentVector:
        """Project ``sum_s values[s] E_{omega_s}`` (repeats add up).

        With ``factors`` (matrices ``F_k`` of shape ``N_k x n_k``) the input
        lives on the larger grid ``N`` and the projected tensor is
        ``F^* (sum_s values[s] E_{omega_s})``.
        """
        idx = np.asarray(indices, dtype=np.intp)
        z = np.asarray(values, dtype=float)
        if idx.ndim != 2 or idx.shape[1] != self.d or z.shape != (idx.shape[0],):
            raise ValueError("indices must be (S, d) and values (S,)")
        S = idx.shape[0]
        lefts, rights = self._sample_frames(idx, factors)
        cores = []
        for k in range(self.d):
            F = None if factors is None else factors[k]
            N = self.shape[k] if F is None else F.shape[0]
            a, b = lefts[k].shape[1], rights[k].shape[1]
            outer = (z[:, None, None] * lefts[k][:, :, None] * rights[k][:, None, :]).reshape(S, a * b)
            onehot = sp.csr_matrix((np.ones(S), (idx[:, k], np.arange(S))), shape=(N, S))
            G = np.asarray(onehot @ outer).reshape(N, a, b)
            if F is not None:
                G = np.einsum("iab,im->amb", G, F)
            else:
                G = G.transpose(1, 0, 2)
            cores.append(np.ascontiguousarray(G))
        return self._gauge_fix(cores)

    # ----------------------------------------------------- coordinate system
    @cached_property
    def _complements(self):
        """Orthonormal bases of the complements of ``U_k^L``, ``k < d``."""
        out = []
        for U in self.left_cores[:-1]:
            UL = left_unfold(U)
            Q, _ = np.linalg.qr(UL, mode="complete")
            out.append(Q[:, UL.shape[1] :])
        return out

    @property
    def block_sizes(self) -> list[int]:
        r, n = self.ranks, self.shape
        sizes = [c.shape[1] * r[k + 1] for k, c in enumerate(self._complements)]
        sizes.append(r[-2] * n[-1])
        return sizes

    def to_coordinates(self, Y: TangentVector) -> np.ndarray:
        """Coordinates of ``Y`` in an orthonormal basis of the tangent space."""
        parts = [(C.T @ left_unfold(G)).ravel() for C, G in zip(self._complements, Y.gauges)]
        parts.append(left_unfold(Y.gauges[-1])[:, 0])
        return np.concatenate(parts)

    def from_coordinates(self, c) -> TangentVector:
        c = np.asarray(c, dtype=float)
        gauges, pos = [], 0
        for k, C in enumerate(self._complements):
            size = C.shape[1] * self.ranks[k + 1]
            block = c[pos : pos + size].reshape(C.shape[1], self.ranks[k + 1])
            gauges.append(core_from_left(C @ block, self.ranks[k], self.shape[k]))
            pos += size
        gauges.append(core_from_left(c[pos:, None], self.ranks[-2], self.shape[-1]))
        return TangentVector(self, tuple(gauges))

    def coordinate_rows(self, indices, factors=None) -> np.ndarray:
        """Rows ``b_omega`` with ``<b_omega, coords(Y)> = (F Y)(omega)``.

        Equivalently ``b_omega`` are the coordinates of the projection of
        ``F^* E_omega``; ``||b_omega||^2 = ||P F^* E_omega||_F^2``. Returns an
        array of shape ``(S, dimension)``.
        """
        idx = np.asarray(indices, dtype=np.intp)
        lefts, rights = self._sample_frames(idx, factors)
        blocks = []
        for k, C in enumerate(self._complements):
            r, n = self.ranks[k], self.shape[k]
            C3 = C.reshape(r, n, C.shape[1], order="F")
            F = None if factors is None else factors[k]
            if F is not None:
                C3 = np.einsum("amD,im->aiD", C3, F)
            t = np.einsum("sa,asD->sD", lefts[k], C3[:, idx[:, k], :])
            blocks.append((t[:, :, None] * rights[k][:, None, :]).reshape(idx.shape[0], -1))
        k = self.d - 1
        F = None if factors is None else factors[k]
        if F is None:
            f = np.zeros((idx.shape[0], self.shape[k]))
            f[np.arange(idx.shape[0]), idx[:, k]] = 1.0
        else:
            f = F[idx[:, k]]
        blocks.append((f[:, :, None] * lefts[k][:, None, :]).reshape(idx.shape[0], -1))
        return np.hstack(blocks)

    def dense_basis(self) -> np.ndarray:
        """Orthonormal tangent basis as a ``prod(n) x dimension`` matrix.

        Row order follows the first-index-fastest linearization.
        """
        grid = np.indices(self.shape).reshape(self.d, -1, order="F").T
        return self.coordinate_rows(grid)

    # ------------------------------------------------------ partial projectors
    def proj_leq(self, k: int, Z) -> np.ndarray:
        """``P_{<=k} Z`` for ``k = 0..d-1`` (``k = 0`` is the identity)."""
        Z = np.asarray(Z, dtype=float)
        if not 0 <= k <= self.d - 1:
            raise ValueError(f"k must be in [0, {self.d - 1}], got {k}")
        if k == 0:
            return Z.copy()
        U = self._left_interfaces[k]
        Zk = unfold(Z, k)
        return tensorize(U @ (U.T @ Zk), k, self.shape)

    def proj_geq(self, k: int, Z) -> np.ndarray:
        """``P_{>=k+1} Z`` for ``k = 1..d`` (``k = d`` is the identity)."""
        Z = np.asarray(Z, dtype=float)
        if not 1 <= k <= self.d:
            raise ValueError(f"k must be in [1, {self.d}], got {k}")
        if k == self.d:
            return Z.copy()
        V = self._right_interfaces[k - 1]
        Zk = unfold(Z, k)
        return tensorize((Zk @ V) @ V.T, k, self.shape)


# ------------------------------------------------------------------ vectors
def embed(Y: TangentVector) -> TensorTrain:
    """Block TT representation of rank ``2r`` of a tangent vector."""
    h = Y.handle
    d = h.d
    U, V, G = h.left_cores, h.right_cores, Y.gauges
    cores = [np.concatenate([G[0], U[0]], axis=2)]
    for k in range(1, d - 1):
        r, n, s = U[k].shape
        C = np.zeros((2 * r, n, 2 * s))
        C[:r, :, :s] = V[k]
        C[r:, :, :s] = G[k]
        C[r:, :, s:] = U[k]
        cores.append(C)
    cores.append(np.concatenate([V[-1], G[-1]], axis=0))
    return TensorTrain(cores)


def _same_base(Y1: TangentVector, Y2: TangentVector):
    if Y1.handle is not Y2.handle:
        raise ValueError("tangent vectors live at different base points")


def tangent_axpy(a: float, Y1: TangentVector, Y2: TangentVector) -> TangentVector:
    """``a * Y1 + Y2``."""
    _same_base(Y1, Y2)
    return TangentVector(Y1.handle, tuple(a * g1 + g2 for g1, g2 in zip(Y1.gauges, Y2.gauges)))


def tangent_inner(Y1: TangentVector, Y2: TangentVector) -> float:
    _same_base(Y1, Y2)
    return float(sum(np.vdot(g1, g2) for g1, g2 in zip(Y1.gauges, Y2.gauges)))


def tangent_norm(Y: TangentVector) -> float:
    return float(np.sqrt(sum(np.vdot(g, g) for g in Y.gauges)))


# ---------------------------------------------------------------- curvature
def _check_pair(X: TensorTrain, Xt: TensorTrain):
    if X.shape != Xt.shape or X.ranks != Xt.ranks:
        raise ValueError(
            f"curvature diagnostics need equal shapes and TT-ranks, got "
            f"{X.shape}/{X.ranks} and {Xt.shape}/{Xt.ranks}"
        )


def curvature_gap(X: TensorTrain, X_tilde: TensorTrain, dense: bool | None = None):
    """``(||(Id - P_{X~}) X||_F, ||X - X~||_F^2 / sigma_min(X))``.

    Dense evaluation is used when the tensors are small (or ``dense=True``);
    otherwise both quantities are computed in TT form.
    """
    _check_pair(X, X_tilde)
    h = ProjectorHandle(X_tilde)
    if dense is None:
        dense = prod(X.shape) <= EXACT_DISTANCE_LIMIT
    if dense:
        Xd, Xtd = to_dense(X), to_dense(X_tilde)
        gap = frob_norm(Xd - to_dense(embed(h.project_dense(Xd))))
        dist = frob_norm(Xd - Xtd)
    else:
        gap = tt_norm(tt_add(X, tt_scale(embed(h.project_tt(X)), -1.0)))
        dist = tt_norm(tt_add(X, tt_scale(X_tilde, -1.0)))
    return gap, dist**2 / sigma_min_tt(X)


def projector_distance(
    X: TensorTrain, X_tilde: TensorTrain, mode: str = "auto", maxiter: int = 200, tol: float = 1e-8
):
    """``(||P_X - P_{X~}||, 2 ||X - X~||_F / sigma_min(X))``.

    ``mode="exact"`` (default when ``prod(n) <= 20000``) builds orthonormal
    tangent bases of both spaces; since the spaces have equal dimension the
    distance is the sine of the largest principal angle. ``mode="power"``
    runs symmetric Lanczos/power iteration on ``P_X - P_{X~}`` applied to
    dense tensors with ``maxiter`` iterations and relative tolerance ``tol``.
    """
    _check_pair(X, X_tilde)
    h, ht = ProjectorHandle(X), ProjectorHandle(X_tilde)
    N = prod(X.shape)
    if mode == "auto":
        mode = "exact" if N <= EXACT_DISTANCE_LIMIT else "power"
    if mode == "exact":
        B, Bt = h.dense_basis(), ht.dense_basis()
        s = np.linalg.svd(B.T @ Bt, compute_uv=False)
        dist = float(np.sqrt(max(0.0, 1.0 - min(1.0, s.min()) ** 2)))
    elif mode == "power":
        shape = X.shape

        def matvec(v):
            Z = v.reshape(shape, order="F")
            diff = to_dense(embed(h.project_dense(Z))) - to_dense(embed(ht.project_dense(Z)))
            return diff.reshape(-1, order="F")

        op = LinearOperator((N, N), matvec=matvec, dtype=float)
        vals = eigsh(op, k=1, which="LM", maxiter=maxiter, tol=tol, return_eigenvectors=False)
        dist = float(abs(vals[0]))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    diff = frob_norm(to_dense(X) - to_dense(X_tilde)) if N <= EXACT_DISTANCE_LIMIT else tt_norm(
        tt_add(X, tt_scale(X_tilde, -1.0))
    )
    return dist, 2.0 * diff / sigma_min_tt(X)
