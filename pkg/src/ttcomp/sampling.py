"""Uniform sampling with replacement and the sampling operator.

Sample indices are stored 0-based as an ``(S, d)`` integer array, in draw
order and with repetitions. File formats (see :mod:`ttcomp.io`) use 1-based
indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import log, prod

import numpy as np
from scipy.special import lambertw

from .tensor import check_shape
from .tt import TensorTrain, evaluate

__all__ = [
    "SampleSet",
    "Observations",
    "sample_uniform",
    "full_grid",
    "apply_sampling",
    "apply_adjoint",
    "max_multiplicity",
    "repetition_bound",
    "lambert_w",
]


@dataclass(frozen=True)
class SampleSet:
    shape: tuple
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = check_shape(self.shape)
        idx = np.array(self.indices, dtype=np.intp, copy=True)
        if idx.ndim != 2 or idx.shape[1] != len(shape):
            raise ValueError(f"indices must have shape (S, {len(shape)}), got {idx.shape}")
        if idx.shape[0] == 0:
            raise ValueError("a sample set needs at least one index")
        if (idx < 0).any() or (idx >= np.array(shape)).any():
            raise IndexError("sample index out of bounds")
        idx.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def rho(self) -> float:
        return len(self) / prod(self.shape)

    @cached_property
    def linear(self) -> np.ndarray:
        """First-index-fastest flat offsets of the samples."""
        return np.ravel_multi_index(self.indices.T, self.shape, order="F")

    @cached_property
    def multiplicity(self) -> dict:
        """Map from 1-based multi-index tuple to its number of occurrences."""
        uniq, counts = np.unique(self.indices, axis=0, return_counts=True)
        return {tuple(int(i) + 1 for i in u): int(c) for u, c in zip(uniq, counts)}

    @cached_property
    def _unique(self):
        return np.unique(self.linear, return_counts=True)


@dataclass(frozen=True)
class Observations:
    sample: SampleSet
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True).ravel()
        if values.shape[0] != len(self.sample):
            raise ValueError(
                f"{values.shape[0]} values for a sample of size {len(self.sample)}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def sample_uniform(shape, count: int, seed) -> SampleSet:
    """``count`` i.i.d. uniform multi-indices (PCG64 generator under ``seed``)."""
    shape = check_shape(shape)
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flat = rng.integers(0, prod(shape), size=count)
    idx = np.stack(np.unravel_index(flat, shape, order="F"), axis=1)
    return SampleSet(shape, idx)


def full_grid(shape) -> SampleSet:
    """Every index exactly once, in linear order."""
    shape = check_shape(shape)
    idx = np.indices(shape).reshape(len(shape), -1, order="F").T
    return SampleSet(shape, idx)


def apply_sampling(sample: SampleSet, X) -> Observations:
    if isinstance(X, TensorTrain):
        if X.shape != sample.shape:
            raise ValueError(f"shape mismatch: {X.shape} vs {sample.shape}")
        return Observations(sample, evaluate(X, sample.indices))
    X = np.asarray(X, dtype=float)
    if X.shape != sample.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {sample.shape}")
    return Observations(sample, X.reshape(-1, order="F")[sample.linear])


def apply_adjoint(obs: Observations) -> np.ndarray:
    """Dense ``sum_s values[s] E_{omega_s}``; repeated indices accumulate."""
    shape = obs.sample.shape
    out = np.bincount(obs.sample.linear, weights=obs.values, minlength=prod(shape))
    return out.reshape(shape, order="F")


def max_multiplicity(sample: SampleSet) -> int:
    """Largest repetition count, equal to the operator norm of the sampling operator."""
    return int(sample._unique[1].max())


def lambert_w(x: float) -> float:
    """Principal branch of the Lambert W function for ``x >= 0``."""
    if x < 0:
        raise ValueError("lambert_w is only provided on x >= 0")
    return float(lambertw(x, 0).real)


def repetition_bound(shape, beta: float) -> float:
    """High-probability bound ``d beta log(n) / W(d)`` on the maximal repetition count.

    ``n`` is the largest dimension. The bound holds with probability at least
    ``1 - n^{d(1 - beta)}`` for ``n >= 16`` and ``beta > 1``.
    """
    shape = check_shape(shape)
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    d, n = len(shape), max(shape)
    return d * beta * log(n) / lambert_w(d)
