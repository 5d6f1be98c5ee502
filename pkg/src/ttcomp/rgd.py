"""Riemannian gradient descent for TT recovery and TT completion.

One step at the iterate ``X_t`` (left-orthogonal, TT-rank ``r``):

1. residual of the data fit, gradient of the least-squares objective;
2. ``Y_t`` = projection of the gradient onto the tangent space at ``X_t``;
3. exact line search in the tangent space,
   ``alpha_t = ||Y_t||^2 / ||R Y_t||^2``;
4. ``X_{t+1} = round_r(X_t - alpha_t Y_t)``.

``X_t`` itself is a tangent vector at ``X_t`` (its last gauge core is the
last core of the left-orthogonal form), so ``X_t - alpha_t Y_t`` is a
tangent vector too and is rounded from its rank-``2r`` block representation.
Completion never forms dense tensors.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .sampling import Observations
from .tangent import ProjectorHandle, TangentVector, embed, tangent_norm
from .tt import TensorTrain, evaluate, gaussian_tt, sigma_min_tt, to_dense, tt_add, tt_norm, tt_round, tt_scale

__all__ = [
    "SolverConfig",
    "ConvergenceTrace",
    "SolveResult",
    "MeasurementOp",
    "IdentityOp",
    "GaussianOp",
    "SamplingOp",
    "DegenerateStepError",
    "rgd_step_recovery",
    "rgd_step_completion",
    "solve",
    "solve_recovery",
    "relative_test_error",
    "convergence_constants",
]

log = logging.getLogger(__name__)

NUMERICAL_RANK_EPS = 1e-13


class DegenerateStepError(RuntimeError):
    """The measurement operator annihilates a nonzero search direction."""


@dataclass
class SolverConfig:
    ranks: tuple
    max_iters: int = 500
    success_tol: float = 1e-4
    stall_tol: float = 1e-12
    stall_window: int = 25
    residual_tol: float = 1e-12
    seed: int | None = 0
    step_mode: str = "exact_line_search"
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        for name in ("success_tol", "stall_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be non-negative")
        if self.step_mode != "exact_line_search":
            raise ValueError(f"unsupported step mode {self.step_mode!r}")
        if not np.isscalar(self.ranks):
            self.ranks = tuple(int(x) for x in self.ranks)


TRACE_FIELDS = ("iter", "residual", "true_error", "alpha", "grad_norm", "rank")


@dataclass
class ConvergenceTrace:
    """Per-iteration diagnostics.

    Row ``t`` describes the iterate ``X_t`` and the step taken from it:
    residual on the sample, error to the ground truth (NaN if unknown), step
    size, tangent gradient norm and the numerical TT-rank of ``X_t``. Unless
    the run converged (in which case the last row already is the final
    iterate), a closing row describes the final iterate with NaN step
    diagnostics.
    """

    iters: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    true_error: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    rank: list = field(default_factory=list)

    def append(self, it, residual, true_error, alpha, grad_norm, rank):
        self.iters.append(int(it))
        self.residual.append(float(residual))
        self.true_error.append(float(true_error))
        self.alpha.append(float(alpha))
        self.grad_norm.append(float(grad_norm))
        self.rank.append(tuple(int(x) for x in rank))

    def __len__(self) -> int:
        return len(self.iters)

    def rows(self):
        for i in range(len(self)):
            yield (
                self.iters[i],
                self.residual[i],
                self.true_error[i],
                self.alpha[i],
                self.grad_norm[i],
                "-".join(map(str, self.rank[i])),
            )

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for row in self.rows():
            w.writerow([row[0]] + [repr(x) for x in row[1:5]] + [row[5]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass
class SolveResult:
    X: TensorTrain
    trace: ConvergenceTrace
    success: bool
    status: str
    iterations: int
    test_error: float

    def __iter__(self):
        # allows ``X, trace, success = solve(...)``
        return iter((self.X, self.trace, self.success))


# ------------------------------------------------------------------ operators
class MeasurementOp:
    """Linear map from dense tensors of ``shape`` to vectors.

    Subclasses implement :meth:`forward` and :meth:`adjoint`. Callers of the
    recovery solver are responsible for ``||R^* R|| <= C`` if they use the
    convergence constants; this is not verified.
    """

    shape: tuple

    def forward(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def quadratic(self, X: np.ndarray) -> float:
        """``<R^* R X, X> = ||R X||^2``."""
        y = self.forward(X)
        return float(np.dot(y, y))

    def adjoint_mismatch(self, seed=0, probes: int = 3) -> float:
        """Largest relative ``|<R X, y> - <X, R^* y>|`` over random probes."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(probes):
            X = rng.standard_normal(self.shape)
            y = rng.standard_normal(self.forward(X).shape)
            lhs = float(np.dot(self.forward(X), y))
            rhs = float(np.vdot(X, self.adjoint(y)))
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        return worst


class IdentityOp(MeasurementOp):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, X):
        return np.asarray(X, dtype=float).reshape(-1, order="F")

    def adjoint(self, y):
        return np.asarray(y, dtype=float).reshape(self.shape, order="F")


class GaussianOp(MeasurementOp):
    """``s`` i.i.d. Gaussian measurements scaled by ``1/sqrt(s)``."""

    def __init__(self, shape, s: int, seed=0):
        self.shape = tuple(shape)
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((s, prod(self.shape))) / math.sqrt(s)

    def forward(self, X):
        return self.matrix @ np.asarray(X, dtype=float).reshape(-1, order="F")

    def adjoint(self, y):
        return (self.matrix.T @ y).reshape(self.shape, order="F")


class SamplingOp(MeasurementOp):
    """Square root of the sampling operator: one measurement per sample entry."""

    def __init__(self, sample):
        self.sample = sample
        self.shape = sample.shape

    def forward(self, X):
        return np.asarray(X, dtype=float).reshape(-1, order="F")[self.sample.linear]

    def adjoint(self, y):
        out = np.bincount(self.sample.linear, weights=y, minlength=prod(self.shape))
        return out.reshape(self.shape, order="F")


# ---------------------------------------------------------------------- steps
def _numerical_rank(svals, ranks) -> tuple:
    # only the singular values kept by the truncation count
    out = []
    for s, r in zip(svals, ranks):
        s = s[:r]
        out.append(int(np.sum(s > NUMERICAL_RANK_EPS * s[0])) if s.size and s[0] > 0 else 0)
    return tuple(out)


def _retract(h: ProjectorHandle, Y: TangentVector, alpha: float, ranks):
    """``round_r(X - alpha Y)`` with ``X`` absorbed into the last gauge slot."""
    gauges = [-alpha * g for g in Y.gauges]
    gauges[-1] = gauges[-1] + h.left_cores[-1]
    Z = embed(TangentVector(h, tuple(gauges)))
    return tt_round(Z, ranks, return_singular_values=True)


def rgd_step_recovery(X_t: TensorTrain, R: MeasurementOp, data, cfg: SolverConfig):
    """One RGD step for ``min ||R X - data||^2`` on the fixed-rank manifold.

    Returns ``(X_next, info)`` with ``info`` holding residual, alpha,
    gradient norm and the numerical rank of ``X_next``.
    """
    h = ProjectorHandle(X_t)
    Xd = to_dense(h.base)
    res = R.forward(Xd) - np.asarray(data, dtype=float)
    Y = h.project_dense(R.adjoint(res))
    ynorm = tangent_norm(Y)
    info = {"residual": float(np.linalg.norm(res)), "grad_norm": ynorm}
    if ynorm == 0.0:
        info.update(alpha=0.0, rank=X_t.ranks)
        return h.base, info
    denom = R.quadratic(to_dense(embed(Y)))
    if denom <= 0.0:
        raise DegenerateStepError("measurement operator vanishes on the search direction")
    alpha = ynorm**2 / denom
    X_next, svals = _retract(h, Y, alpha, cfg.ranks)
    info.update(alpha=alpha, rank=_numerical_rank(svals, X_next.ranks))
    return X_next, info


def rgd_step_completion(X_t: TensorTrain, obs: Observations, cfg: SolverConfig, factors=None):
    """One RGD step for TT completion from samples ``obs``.

    ``factors`` (side-information matrices) makes the iterate live on the
    small grid while ``obs`` refers to the large one; the sampling operator
    becomes ``F^* R_Omega F``.
    """
    h = ProjectorHandle(X_t)
    idx = obs.sample.indices
    res = evaluate(h.base, idx, factors) - obs.values
    Y = h.project_sparse(idx, res, factors)
    ynorm = tangent_norm(Y)
    info = {"residual": float(np.linalg.norm(res)), "grad_norm": ynorm}
    if ynorm == 0.0:
        info.update(alpha=0.0, rank=X_t.ranks)
        return h.base, info
    yvals = evaluate(embed(Y), idx, factors)
    denom = float(np.dot(yvals, yvals))
    if denom <= 0.0:
        raise DegenerateStepError("sample misses the support of the search direction")
    alpha = ynorm**2 / denom
    X_next, svals = _retract(h, Y, alpha, cfg.ranks)
    info.update(alpha=alpha, rank=_numerical_rank(svals, X_next.ranks))
    return X_next, info


# --------------------------------------------------------------------- solver
_START_STREAM = 1


def _initial_guess(shape, cfg: SolverConfig) -> TensorTrain:
    # separate stream so that equal seeds for the truth and the start never coincide
    seed = None if cfg.seed is None else np.random.SeedSequence([cfg.seed, _START_STREAM])
    return gaussian_tt(shape, cfg.ranks, np.random.default_rng(seed))


def relative_test_error(X: TensorTrain, test: Observations, factors=None) -> float:
    vals = evaluate(X, test.sample.indices, factors)
    ref = float(np.linalg.norm(test.values))
    return float(np.linalg.norm(test.values - vals)) / (ref if ref > 0 else 1.0)


def _true_error(X, truth, factors):
    if truth is None:
        return float("nan")
    if isinstance(truth, TensorTrain):
        return tt_norm(tt_add(X, tt_scale(truth, -1.0)))
    return float(np.linalg.norm(to_dense(X) - truth))


def _run(step, X, cfg, residual_ref, truth, factors, test):
    trace = ConvergenceTrace()
    status = "max_iters"
    small_changes = 0
    prev_res = None
    it = 0
    rank = X.ranks
    for it in range(cfg.max_iters):
        X_next, info = step(X)
        if cfg.record_trace:
            trace.append(
                it, info["residual"], _true_error(X, truth, factors), info["alpha"],
                info["grad_norm"], rank,
            )
        rank = info["rank"]
        rel = info["residual"] / residual_ref
        if prev_res is not None and prev_res > 0:
            change = abs(info["residual"] - prev_res) / prev_res
            small_changes = small_changes + 1 if change < cfg.stall_tol else 0
        prev_res = info["residual"]
        if rel <= cfg.residual_tol or info["grad_norm"] == 0.0:
            status = "converged"
            break
        X = X_next
        if small_changes >= cfg.stall_window:
            status = "stalled"
            it += 1
            break
    else:
        it = cfg.max_iters
    if cfg.record_trace and status != "converged":
        # the final iterate has no row yet
        trace.append(it, float("nan"), _true_error(X, truth, factors), float("nan"), float("nan"), rank)
    return X, trace, status, it


def solve(
    obs: Observations,
    cfg: SolverConfig,
    x0: TensorTrain | None = None,
    truth=None,
    test: Observations | None = None,
    factors=None,
    shape=None,
) -> SolveResult:
    """RGD for TT completion.

    Runs up to ``cfg.max_iters`` steps from ``x0`` (default: Gaussian TT cores
    from a stream derived from ``cfg.seed``, distinct from
    ``gaussian_tt(shape, r, cfg.seed)``). Stops early when the relative sample residual drops
    below ``cfg.residual_tol`` or stagnates (relative change below
    ``cfg.stall_tol`` for ``cfg.stall_window`` consecutive steps). Success is
    decided on the final iterate: relative error on ``test`` below
    ``cfg.success_tol``; without a test set the true error is used, and
    without ground truth the training residual.

    ``factors``/``shape`` run the side-information variant: the iterate has
    shape ``shape`` (the small grid) and ``obs`` lives on the large grid.
    """
    small = tuple(shape) if shape is not None else obs.sample.shape
    if x0 is None:
        x0 = _initial_guess(small, cfg)
    ref = float(np.linalg.norm(obs.values)) or 1.0

    def step(X):
        return rgd_step_completion(X, obs, cfg, factors)

    try:
        X, trace, status, iters = _run(step, x0, cfg, ref, truth, factors, test)
    except DegenerateStepError:
        log.warning("degenerate step; stopping")
        return SolveResult(x0, ConvergenceTrace(), False, "degenerate", 0, float("inf"))
    if test is not None:
        err = relative_test_error(X, test, factors)
    elif truth is not None:
        tnorm = tt_norm(truth) if isinstance(truth, TensorTrain) else float(np.linalg.norm(truth))
        err = _true_error(X, truth, factors) / (tnorm or 1.0)
    else:
        err = relative_test_error(X, obs, factors)
    return SolveResult(X, trace, bool(err < cfg.success_tol), status, iters, err)


def solve_recovery(
    R: MeasurementOp, data, cfg: SolverConfig, x0: TensorTrain | None = None, truth=None
) -> SolveResult:
    """RGD for TT recovery from generic linear measurements (dense, desk scale)."""
    if x0 is None:
        x0 = _initial_guess(R.shape, cfg)
    data = np.asarray(data, dtype=float)
    ref = float(np.linalg.norm(data)) or 1.0

    def step(X):
        return rgd_step_recovery(X, R, data, cfg)

    X, trace, status, iters = _run(step, x0, cfg, ref, truth, None, None)
    if truth is not None:
        tnorm = tt_norm(truth) if isinstance(truth, TensorTrain) else float(np.linalg.norm(truth))
        err = _true_error(X, truth, None) / (tnorm or 1.0)
    else:
        err = float(np.linalg.norm(R.forward(to_dense(X)) - data)) / ref
    return SolveResult(X, trace, bool(err < cfg.success_tol), status, iters, err)


# ------------------------------------------------------------------ constants
def convergence_constants(
    X_t: TensorTrain,
    A: TensorTrain,
    C: float,
    delta: float | None = None,
    eps: float | None = None,
    rho: float | None = None,
) -> dict:
    """Contraction factor and local-basin condition for local RGD convergence.

    Give ``delta`` (RIP constant of order ``2r``) for the recovery variant, or
    ``eps`` (tangent-space RIP constant at ``A``) and ``rho`` for completion.
    ``C`` bounds ``||R^* R||`` (recovery) or ``||R_Omega||`` (completion).

    Returns ``beta``, the basin right-hand side ``basin``, the current
    ``ratio = ||X_t - A|| / sigma_min(A)``, ``eps_t`` (completion only) and
    ``admissible`` (whether the RIP constant is small enough for the basin
    statement to apply).
    """
    if (delta is None) == (eps is None):
        raise ValueError("give exactly one of delta (recovery) or eps (completion)")
    d = A.d
    q = 1.0 + math.sqrt(d - 1)
    sigma = sigma_min_tt(A)
    if sigma <= 0:
        raise ValueError("sigma_min(A) must be positive")
    err = tt_norm(tt_add(X_t, tt_scale(A, -1.0)))
    ratio = err / sigma
    admissible_limit = 1.0 / (3.0 + 2.0 * math.sqrt(d - 1))
    if delta is not None:
        if delta >= 1.0:
            raise ValueError("delta must be below 1")
        beta = q * (2 * delta / (1 - delta) + (1 + C / (1 - delta)) * ratio)
        basin = ((1 - delta) / q - 2 * delta) / (1 + C - delta)
        return {
            "beta": beta,
            "basin": basin,
            "ratio": ratio,
            "admissible": delta < admissible_limit,
        }
    if rho is None or rho <= 0:
        raise ValueError("completion constants need the sampling density rho")
    eps_t = eps + 2 * ratio * (1 + 2 * C / rho)
    if eps_t >= 1.0:
        raise ValueError(f"eps_t = {eps_t:.3g} is not below 1; the constants are undefined")
    beta = q * (2 * eps_t / (1 - eps_t) + (1 + C / (1 - eps_t)) * ratio)
    denom = 5 + C + 8 * C / rho + (2 + 4 * C / rho) / q - eps
    basin = ((1 - eps) / q - 2 * eps) / denom
    return {
        "beta": beta,
        "basin": basin,
        "ratio": ratio,
        "eps_t": eps_t,
        "admissible": eps < admissible_limit,
    }
