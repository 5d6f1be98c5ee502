"""Coherence measures and the tangent-space RIP estimate."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import prod

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .sampling import SampleSet
from .tangent import ProjectorHandle, embed
from .tt import TensorTrain, evaluate, left_orthogonalize, right_orthogonalize

__all__ = [
    "CoherenceReport",
    "subspace_coherence",
    "interface_coherence",
    "core_coherence",
    "bound_C0",
    "bound_C1",
    "bound_C2",
    "projection_coherence",
    "rip_estimate",
    "coherence_report",
    "INTERFACE_ROW_LIMIT",
    "RIP_EXACT_LIMIT",
]

INTERFACE_ROW_LIMIT = 10**6
RIP_EXACT_LIMIT = 5000
PROJECTION_ENUM_LIMIT = 10**7


def subspace_coherence(U, tol: float = 1e-10) -> float:
    """``(n / r) max_i ||row_i(U)||^2`` for ``U`` with orthonormal columns."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError("expected a matrix")
    n, r = U.shape
    if np.linalg.norm(U.T @ U - np.eye(r)) > tol:
        raise ValueError("columns of U are not orthonormal")
    return float(n / r * np.max(np.sum(U * U, axis=1)))


def _row_norms_left(cores, k):
    # squared row norms of U_{<=k} from left-orthogonal cores
    M = cores[0].reshape(-1, cores[0].shape[2], order="F")
    for G in cores[1:k]:
        M = np.einsum("pa,ais->pis", M, G).reshape(-1, G.shape[2], order="F")
    return np.sum(M * M, axis=1)


def _row_norms_right(cores, k):
    # squared row norms of V_{>=k+1} from right-orthogonal cores
    last = cores[-1]
    M = last.reshape(last.shape[0], -1, order="F").T
    for G in reversed(cores[k:-1]):
        M = np.einsum("qb,aib->iqa", M, G).reshape(-1, G.shape[0], order="F")
    return np.sum(M * M, axis=1)


def interface_coherence(X: TensorTrain, max_rows: int = INTERFACE_ROW_LIMIT) -> dict:
    """Coherences of all interface matrices and their maximum ``mu_I``.

    Rows of the orthonormal interface bases are enumerated exhaustively. When
    an interface has more than ``max_rows`` rows its exact coherence is not
    computed; the entry holds the core-coherence bound ``mu_C^k`` instead and
    ``mode`` is reported as ``"bound"``.
    """
    d, n = X.d, X.shape
    left = left_orthogonalize(X, check=True).cores
    right = right_orthogonalize(X, check=True).cores
    ranks = X.ranks
    mu_left, mu_right, exact = [], [], True
    mu_c = None
    for k in range(1, d):
        rows_l, rows_r = prod(n[:k]), prod(n[k:])
        if rows_l <= max_rows:
            mu_left.append(float(rows_l / ranks[k - 1] * _row_norms_left(left, k).max()))
        else:
            mu_c = mu_c if mu_c is not None else core_coherence(X)["mu_C"]
            mu_left.append(float(mu_c**k))
            exact = False
        if rows_r <= max_rows:
            mu_right.append(float(rows_r / ranks[k - 1] * _row_norms_right(right, k).max()))
        else:
            mu_c = mu_c if mu_c is not None else core_coherence(X)["mu_C"]
            mu_right.append(float(mu_c ** (d - k)))
            exact = False
    return {
        "mu_left": mu_left,
        "mu_right": mu_right,
        "mu_I": max(mu_left + mu_right),
        "mode": "exact" if exact else "bound",
    }


def core_coherence(X: TensorTrain) -> dict:
    """Left/right core coherences and ``mu_C``.

    ``mu_left[k-1]`` is the left coherence of core ``k`` (``k = 1..d-1``) of
    the left-orthogonal representation and ``mu_right[k-2]`` the right
    coherence of core ``k`` (``k = 2..d``) of the right-orthogonal one.
    """
    left = left_orthogonalize(X, check=True).cores
    right = right_orthogonalize(X, check=True).cores
    mu_left = []
    for U in left[:-1]:
        r, n, s = U.shape
        norms = np.linalg.norm(U.transpose(1, 0, 2), ord=2, axis=(1, 2))
        mu_left.append(float(r * n / s * np.max(norms**2)))
    mu_right = []
    for V in right[1:]:
        r, n, s = V.shape
        norms = np.linalg.norm(V.transpose(1, 0, 2), ord=2, axis=(1, 2))
        mu_right.append(float(s * n / r * np.max(norms**2)))
    return {"mu_left": mu_left, "mu_right": mu_right, "mu_C": max(mu_left + mu_right)}


def _full_ranks(shape, r):
    d = len(shape)
    r = (int(r),) * (d - 1) if np.isscalar(r) else tuple(int(x) for x in r)
    if len(r) != d - 1:
        raise ValueError(f"rank tuple must have length {d - 1}")
    return (1,) + r + (1,)


def bound_C0(mu0: float, shape, r) -> float:
    """Interface-coherence bound on ``max_omega ||P E_omega||^2``."""
    n, rk = tuple(shape), _full_ranks(shape, r)
    d = len(n)
    middle = sum(rk[k - 1] * n[k - 1] * rk[k] for k in range(2, d))
    return mu0 / prod(n) * (n[0] * rk[1] + mu0 * middle + rk[d - 1] * n[d - 1])


def bound_C1(mu1: float, shape, r) -> float:
    """Core-coherence bound on ``max_omega ||P E_omega||^2``."""
    n, rk = tuple(shape), _full_ranks(shape, r)
    d = len(n)
    return mu1 ** (d - 1) / prod(n) * sum(rk[k] * n[k] * rk[k + 1] for k in range(d))


def bound_C2(mu1: float, mu2: float, shape_n, shape_m, r) -> float:
    """Side-information bound on ``max_omega ||P_B Q^* E_omega||^2``."""
    n, m = tuple(shape_n), tuple(shape_m)
    rk = _full_ranks(m, r)
    d = len(m)
    return mu1 ** (d - 1) * mu2 / prod(n) * sum(rk[k] * m[k] * rk[k + 1] for k in range(d))


def projection_coherence(
    X: TensorTrain, factors=None, max_size: int = PROJECTION_ENUM_LIMIT, batch: int = 2**16
) -> float:
    """Exhaustive ``max_omega ||P_X E_omega||_F^2``.

    With side-information ``factors`` the maximum is of
    ``||P_X F^* E_omega||^2`` over the larger grid.
    """
    h = ProjectorHandle(X)
    big = X.shape if factors is None else tuple(
        X.shape[k] if F is None else F.shape[0] for k, F in enumerate(factors)
    )
    N = prod(big)
    if N > max_size:
        raise ValueError(f"exhaustive enumeration of {N} indices exceeds the limit {max_size}")
    best = 0.0
    for start in range(0, N, batch):
        flat = np.arange(start, min(N, start + batch))
        idx = np.stack(np.unravel_index(flat, big, order="F"), axis=1)
        rows = h.coordinate_rows(idx, factors)
        best = max(best, float(np.max(np.sum(rows * rows, axis=1))))
    return best


def rip_estimate(
    X: TensorTrain,
    sample: SampleSet,
    factors=None,
    mode: str = "auto",
    maxiter: int = 1000,
    tol: float = 1e-10,
) -> float:
    """``||P - rho^{-1} P R_Omega P||`` restricted to the tangent space at ``X``.

    ``mode="exact"`` forms the Gram matrix of the sampled rows of an
    orthonormal tangent basis and takes its extreme eigenvalues; used when the
    tangent dimension is at most 5000. ``mode="power"`` is a matrix-free
    symmetric Lanczos iteration (``scipy.sparse.linalg.eigsh``) with the given
    ``maxiter`` and relative ``tol``. ``factors`` switches to the
    side-information operator ``F^* R_Omega F``; ``rho`` is then relative to
    the large grid.
    """
    h = ProjectorHandle(X)
    D = h.dimension
    if D < 1:
        raise ValueError("degenerate tangent space")
    rho = sample.rho
    if mode == "auto":
        mode = "exact" if D <= RIP_EXACT_LIMIT else "power"
    if mode == "exact":
        B = h.coordinate_rows(sample.indices, factors)
        M = np.eye(D) - (B.T @ B) / rho
        ev = np.linalg.eigvalsh(M)
        return float(max(abs(ev[0]), abs(ev[-1])))
    if mode != "power":
        raise ValueError(f"unknown mode {mode!r}")

    idx = sample.indices

    def matvec(c):
        c = np.ravel(c)
        Y = h.from_coordinates(c)
        vals = evaluate(embed(Y), idx, factors)
        back = h.project_sparse(idx, vals, factors)
        return c - h.to_coordinates(back) / rho

    op = LinearOperator((D, D), matvec=matvec, dtype=float)
    ev = eigsh(op, k=1, which="LM", maxiter=maxiter, tol=tol, return_eigenvectors=False)
    return float(abs(ev[0]))


@dataclass
class CoherenceReport:
    shape: list
    ranks: list
    mu_left_interface: list
    mu_right_interface: list
    mu_I: float
    interface_mode: str
    mu_L: list
    mu_R: list
    mu_C: float
    C0: float
    C1: float
    C2: float | None = None
    mu_side: list | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CoherenceReport":
        return cls(**data)


def coherence_report(X: TensorTrain, side_factors=None) -> CoherenceReport:
    """All coherences of ``X`` and the derived projection bounds.

    ``side_factors`` (orthonormal ``Q_k``, one per mode) adds the side
    coherences ``mu(Q_k)`` and the bound ``C2``; ``X`` is then the small
    tensor ``B``.
    """
    ic = interface_coherence(X)
    cc = core_coherence(X)
    report = CoherenceReport(
        shape=list(X.shape),
        ranks=list(X.ranks),
        mu_left_interface=ic["mu_left"],
        mu_right_interface=ic["mu_right"],
        mu_I=ic["mu_I"],
        interface_mode=ic["mode"],
        mu_L=cc["mu_left"],
        mu_R=cc["mu_right"],
        mu_C=cc["mu_C"],
        C0=bound_C0(ic["mu_I"], X.shape, X.ranks),
        C1=bound_C1(cc["mu_C"], X.shape, X.ranks),
    )
    if side_factors is not None:
        mu_side = [subspace_coherence(Q) for Q in side_factors]
        big = tuple(Q.shape[0] for Q in side_factors)
        # the bound is stated with the core coherence of the large tensor A = Q B
        A = TensorTrain([np.einsum("im,amb->aib", Q, G) for Q, G in zip(side_factors, X.cores)])
        mu_c_big = core_coherence(A)["mu_C"]
        report.mu_side = mu_side
        report.C2 = bound_C2(mu_c_big, max(mu_side), big, X.shape, X.ranks)
        report.extras["mu_C_side_tensor"] = mu_c_big
    return report
