"""Completion with side information.

The unknown tensor is ``A = Q B = B x_1 Q_1 ... x_d Q_d`` with known
orthonormal ``Q_k`` (``n_k x m_k``) and a low-rank small tensor ``B``. The
solver runs RGD on the small manifold with the sampling operator
``Q^* R_Omega Q``; ``Q`` only enters through sample evaluation and residual
accumulation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .coherence import rip_estimate
from .rgd import SolveResult, SolverConfig, rgd_step_completion, solve
from .sampling import Observations, SampleSet
from .tensor import frob_norm, mode_product
from .tt import TensorTrain

__all__ = [
    "SideInfo",
    "q_apply",
    "q_adjoint",
    "membership_check",
    "rgd_step_side",
    "rip_estimate_side",
    "solve_side",
    "random_side_info",
]

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SideInfo:
    """Per-mode matrices with orthonormal columns.

    Non-orthonormal input is replaced by the ``Q`` factor of its QR
    decomposition (same column span) and a warning is emitted.
    """

    factors: tuple

    def __post_init__(self):
        out = []
        for k, Q in enumerate(self.factors, start=1):
            Q = np.array(Q, dtype=float, copy=True)
            if Q.ndim != 2:
                raise ValueError(f"factor {k} is not a matrix")
            n, m = Q.shape
            if m > n or m < 1:
                raise ValueError(f"factor {k} has shape {Q.shape}; need 1 <= m_k <= n_k")
            if np.linalg.norm(Q.T @ Q - np.eye(m)) > ORTHO_TOL:
                warnings.warn(f"factor {k} is not orthonormal; replaced by its QR factor", stacklevel=3)
                Q, R = np.linalg.qr(Q)
                if np.min(np.abs(np.diag(R))) <= 1e-12 * max(1.0, np.abs(R).max()):
                    raise ValueError(f"factor {k} does not have full column rank")
            Q.flags.writeable = False
            out.append(Q)
        if not out:
            raise ValueError("need at least one factor")
        object.__setattr__(self, "factors", tuple(out))

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def big_shape(self) -> tuple:
        return tuple(Q.shape[0] for Q in self.factors)

    @property
    def small_shape(self) -> tuple:
        return tuple(Q.shape[1] for Q in self.factors)


def random_side_info(big_shape, small_shape, seed) -> SideInfo:
    """Orthonormal bases of uniformly random subspaces (QR of Gaussian matrices)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fac = []
    for n, m in zip(big_shape, small_shape):
        fac.append(np.linalg.qr(rng.standard_normal((n, m)))[0])
    return SideInfo(tuple(fac))


def _apply(mats, W):
    if isinstance(W, TensorTrain):
        if W.d != len(mats):
            raise ValueError("order mismatch")
        cores = []
        for M, G in zip(mats, W.cores):
            if M.shape[1] != G.shape[1]:
                raise ValueError(f"mode size {G.shape[1]} does not match factor {M.shape}")
            cores.append(np.einsum("im,amb->aib", M, G))
        return TensorTrain(cores)
    W = np.asarray(W, dtype=float)
    if W.ndim != len(mats):
        raise ValueError("order mismatch")
    for k, M in enumerate(mats, start=1):
        if W.shape[k - 1] != M.shape[1]:
            raise ValueError(f"mode {k} has size {W.shape[k - 1]}, factor expects {M.shape[1]}")
        W = mode_product(W, k, M)
    return W


def q_apply(Q: SideInfo, W):
    """``W x_1 Q_1 ... x_d Q_d`` for a TT (core-wise, ranks unchanged) or dense tensor."""
    return _apply(Q.factors, W)


def q_adjoint(Q: SideInfo, X):
    """``X x_1 Q_1^T ... x_d Q_d^T``."""
    return _apply([F.T for F in Q.factors], X)


def membership_check(A, Q: SideInfo, tol: float = 1e-10) -> bool:
    """Whether every mode-``k`` fiber of ``A`` lies in ``col(Q_k)``.

    Tested as ``||Q Q^* A - A|| <= tol ||A||``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != Q.big_shape:
        raise ValueError(f"shape {A.shape} does not match side information {Q.big_shape}")
    err = frob_norm(q_apply(Q, q_adjoint(Q, A)) - A)
    return bool(err <= tol * frob_norm(A))


def _check_obs(obs: Observations, Q: SideInfo):
    if obs.sample.shape != Q.big_shape:
        raise ValueError(f"observations on {obs.sample.shape}, side information on {Q.big_shape}")


def rgd_step_side(W_t: TensorTrain, obs: Observations, Q: SideInfo, cfg: SolverConfig):
    """One RGD step on the small manifold with sampling operator ``Q^* R_Omega Q``."""
    _check_obs(obs, Q)
    if W_t.shape != Q.small_shape:
        raise ValueError(f"iterate shape {W_t.shape} does not match {Q.small_shape}")
    return rgd_step_completion(W_t, obs, cfg, factors=Q.factors)


def rip_estimate_side(B: TensorTrain, sample: SampleSet, Q: SideInfo, mode: str = "auto", **kw) -> float:
    """``||P_B - rho^{-1} P_B Q^* R_Omega Q P_B||`` with ``rho = |Omega| / prod(n)``."""
    if sample.shape != Q.big_shape or B.shape != Q.small_shape:
        raise ValueError("shape mismatch between B, the sample and the side information")
    return rip_estimate(B, sample, factors=Q.factors, mode=mode, **kw)


def solve_side(
    obs: Observations,
    Q: SideInfo,
    cfg: SolverConfig,
    w0: TensorTrain | None = None,
    truth: TensorTrain | None = None,
    test: Observations | None = None,
) -> SolveResult:
    """RGD with side information.

    ``truth`` is the small tensor ``B``; since ``Q`` is an isometry the
    recorded true error equals ``||Q W_t - A||``. The returned iterate is the
    small tensor ``W``; ``q_apply(Q, W)`` gives the completed tensor.
    """
    _check_obs(obs, Q)
    if test is not None:
        _check_obs(test, Q)
    return solve(obs, cfg, x0=w0, truth=truth, test=test, factors=Q.factors, shape=Q.small_shape)

