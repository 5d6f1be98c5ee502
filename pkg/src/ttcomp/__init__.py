"""Tensor-train completion by Riemannian gradient descent."""

from .rgd import SolverConfig, solve, solve_recovery
from .sampling import Observations, SampleSet, apply_sampling, sample_uniform
from .sideinfo import SideInfo, q_apply, q_adjoint, solve_side
from .tangent import ProjectorHandle, TangentVector
from .tt import TensorTrain, gaussian_tt, to_dense, tt_round, tt_svd

__version__ = "0.1.0"

__all__ = [
    "Observations",
    "ProjectorHandle",
    "SampleSet",
    "SideInfo",
    "SolverConfig",
    "TangentVector",
    "TensorTrain",
    "apply_sampling",
    "gaussian_tt",
    "q_adjoint",
    "q_apply",
    "sample_uniform",
    "solve",
    "solve_recovery",
    "solve_side",
    "to_dense",
    "tt_round",
    "tt_svd",
]
