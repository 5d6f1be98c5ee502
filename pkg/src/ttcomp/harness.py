"""Experiment driver: phase plots, chi-squared products and diagnostic reports.

Seed derivation
---------------
Every random object of a trial is drawn from a PCG64 generator seeded with
``numpy.random.SeedSequence(entropy=[master_seed, tag, *coords, trial, sub])``
where ``tag`` identifies the experiment kind, ``coords`` the cell and
``sub`` the object (truth, start, sample, test set, side information). The
entropy list is hashed by ``SeedSequence``, whose algorithm is fixed by
NumPy's stability policy, so a given configuration reproduces the same
draws across runs, worker counts and versions of this package.

For the side-information experiment the ground truth ``B`` and the starting
point are drawn without ``n`` in the coordinates, so all values of ``n``
share them (common random numbers); ``Q`` and the samples depend on ``n``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from math import log

import numpy as np

from .coherence import coherence_report, rip_estimate
from .rgd import SolverConfig, solve
from .sampling import SampleSet, apply_sampling, max_multiplicity, repetition_bound, sample_uniform
from .sideinfo import q_apply, random_side_info, solve_side
from .tt import TensorTrain, gaussian_tt

__all__ = [
    "ExperimentConfig",
    "SideExperimentConfig",
    "PhaseCell",
    "PhaseResult",
    "derive_rng",
    "manifold_dimension",
    "reference_curves",
    "run_trial",
    "run_phase_plot",
    "run_side_trial",
    "run_phase_plot_side",
    "run_chi_median",
    "run_reports",
]

TAG_PHASE = 1
TAG_SIDE = 2
_SUB_TRUTH, _SUB_START, _SUB_SAMPLE, _SUB_TEST, _SUB_SIDE = range(5)


def derive_rng(master: int, tag: int, coords, trial: int, sub: int) -> np.random.Generator:
    """Generator for one random object of one trial (see module docstring)."""
    entropy = [int(master), int(tag), *(int(c) for c in coords), int(trial), int(sub)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def manifold_dimension(shape, r) -> int:
    """Dimension of the manifold of tensors with TT-rank ``r``."""
    d = len(shape)
    rk = (1,) + ((int(r),) * (d - 1) if np.isscalar(r) else tuple(r)) + (1,)
    return sum(rk[k] * shape[k] * rk[k + 1] for k in range(d)) - sum(x * x for x in rk[1:-1])


def reference_curves(d: int, n: int, r: int) -> dict:
    """The two reference sample sizes ``d^2 r^2 n log(n) / 10`` and ``d^2.2 r^2 n log(n) / 10``."""
    base = r * r * n * log(n) / 10.0
    return {"d2": d**2 * base, "d2.2": d**2.2 * base}


def _solver_config(r, overrides: dict) -> SolverConfig:
    opts = {"ranks": r, "max_iters": 500, "success_tol": 1e-4, "record_trace": False}
    opts.update(overrides or {})
    return SolverConfig(**opts)


@dataclass
class ExperimentConfig:
    """Phase plot over order ``d`` and sample size for cubic shapes ``n^d``.

    ``sample_sizes`` is either one list used for every ``d`` or a mapping
    from ``d`` to its own list. ``test_size`` defaults to the training size.
    """

    n: int
    d_values: list
    r: int
    sample_sizes: list | dict
    trials: int = 5
    master_seed: int = 0
    solver: dict = field(default_factory=dict)
    test_size: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.n < 2 or self.r < 1:
            raise ValueError("need n >= 2 and r >= 1")
        if not self.d_values or any(d < 2 for d in self.d_values):
            raise ValueError("d_values must be a nonempty list of orders >= 2")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if isinstance(self.sample_sizes, dict):
            self.sample_sizes = {int(k): list(v) for k, v in self.sample_sizes.items()}
            missing = [d for d in self.d_values if d not in self.sample_sizes]
            if missing:
                raise ValueError(f"no sample sizes for d = {missing}")
        grids = self.sample_sizes.values() if isinstance(self.sample_sizes, dict) else [self.sample_sizes]
        for g in grids:
            if not g or any(int(s) < 1 for s in g):
                raise ValueError("sample-size grids must be nonempty lists of positive integers")
        _solver_config(self.r, self.solver)  # validate overrides early

    def sizes_for(self, d: int) -> list:
        grid = self.sample_sizes[d] if isinstance(self.sample_sizes, dict) else self.sample_sizes
        return [int(s) for s in grid]


@dataclass
class SideExperimentConfig:
    """Side-information phase plot over ``n`` and sample size at fixed ``m``."""

    d: int
    m: int
    r: int
    n_values: list
    sample_sizes: list
    trials: int = 5
    master_seed: int = 0
    solver: dict = field(default_factory=dict)
    test_size: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.d < 2 or self.m < 1 or self.r < 1:
            raise ValueError("need d >= 2, m >= 1, r >= 1")
        if not self.n_values or any(n < self.m for n in self.n_values):
            raise ValueError("n_values must be nonempty with every n >= m")
        if not self.sample_sizes or any(int(s) < 1 for s in self.sample_sizes):
            raise ValueError("sample_sizes must be a nonempty list of positive integers")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        _solver_config(self.r, self.solver)


@dataclass(frozen=True)
class PhaseCell:
    d: int
    n: int
    sample_size: int
    successes: int
    trials: int

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")

    @property
    def frequency(self) -> float:
        return self.successes / self.trials


CELL_FIELDS = ("d", "n", "sample_size", "successes", "trials", "frequency")


@dataclass
class PhaseResult:
    cells: list
    metadata: dict

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CELL_FIELDS)
        for c in self.cells:
            w.writerow([c.d, c.n, c.sample_size, c.successes, c.trials, repr(c.frequency)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def frequency_table(self) -> dict:
        """``{(d, n): [(sample_size, frequency), ...]}``."""
        out: dict = {}
        for c in self.cells:
            out.setdefault((c.d, c.n), []).append((c.sample_size, c.frequency))
        return out


# ---------------------------------------------------------------- trials
def run_trial(n: int, d: int, r: int, S: int, trial: int, master: int, solver: dict, test_size=None):
    """One completion trial; returns ``(success, test_error)``."""
    shape = (n,) * d
    coords = (d, n, S)
    truth = gaussian_tt(shape, r, derive_rng(master, TAG_PHASE, coords, trial, _SUB_TRUTH))
    x0 = gaussian_tt(shape, r, derive_rng(master, TAG_PHASE, coords, trial, _SUB_START))
    omega = sample_uniform(shape, S, derive_rng(master, TAG_PHASE, coords, trial, _SUB_SAMPLE))
    test = sample_uniform(shape, test_size or S, derive_rng(master, TAG_PHASE, coords, trial, _SUB_TEST))
    res = solve(
        apply_sampling(omega, truth), _solver_config(r, solver), x0=x0, test=apply_sampling(test, truth)
    )
    return res.success, res.test_error


def run_side_trial(n, d, m, r, S, trial, master, solver, test_size=None):
    """One side-information trial; returns ``(success, test_error)``."""
    small, big = (m,) * d, (n,) * d
    shared = (d, m, S)
    B = gaussian_tt(small, r, derive_rng(master, TAG_SIDE, shared, trial, _SUB_TRUTH))
    w0 = gaussian_tt(small, r, derive_rng(master, TAG_SIDE, shared, trial, _SUB_START))
    coords = shared + (n,)
    Q = random_side_info(big, small, derive_rng(master, TAG_SIDE, coords, trial, _SUB_SIDE))
    omega = sample_uniform(big, S, derive_rng(master, TAG_SIDE, coords, trial, _SUB_SAMPLE))
    test = sample_uniform(big, test_size or S, derive_rng(master, TAG_SIDE, coords, trial, _SUB_TEST))
    A = q_apply(Q, B)
    res = solve_side(
        apply_sampling(omega, A), Q, _solver_config(r, solver), w0=w0, truth=B, test=apply_sampling(test, A)
    )
    return res.success, res.test_error


def _star(args):
    fn, a = args
    return fn(*a)


def _map(jobs, workers: int):
    if workers <= 1:
        return [fn(*a) for fn, a in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_star, jobs, chunksize=1))


def _metadata(cfg, extra) -> dict:
    from . import __version__

    meta = {
        "config": asdict(cfg),
        "version": __version__,
        "seed_derivation": "SeedSequence([master_seed, tag, *cell, trial, sub])",
        "success_criterion": "relative test-set error below success_tol after the solve",
        "test_set": "independent uniform sample with replacement, overlap with the training sample allowed",
        "test_size": cfg.test_size if cfg.test_size is not None else "same as training sample",
    }
    meta.update(extra)
    return meta


def run_phase_plot(cfg: ExperimentConfig) -> PhaseResult:
    """Success frequencies of TT completion over ``(d, |Omega|)``."""
    jobs, keys = [], []
    for d in cfg.d_values:
        for S in cfg.sizes_for(d):
            for t in range(cfg.trials):
                jobs.append((run_trial, (cfg.n, d, cfg.r, S, t, cfg.master_seed, cfg.solver, cfg.test_size)))
                keys.append((d, S))
    outcomes = _map(jobs, cfg.workers)
    counts: dict = {}
    for key, (ok, _) in zip(keys, outcomes):
        counts[key] = counts.get(key, 0) + int(ok)
    cells = [
        PhaseCell(d, cfg.n, S, counts[(d, S)], cfg.trials) for d in cfg.d_values for S in cfg.sizes_for(d)
    ]
    refs = {
        str(d): dict(
            reference_curves(d, cfg.n, cfg.r),
            manifold_dimension=manifold_dimension((cfg.n,) * d, cfg.r),
        )
        for d in cfg.d_values
    }
    return PhaseResult(cells, _metadata(cfg, {"reference_curves": refs}))


def run_phase_plot_side(cfg: SideExperimentConfig) -> PhaseResult:
    """Success frequencies of side-information completion over ``(n, |Omega|)``."""
    jobs, keys = [], []
    for n in cfg.n_values:
        for S in cfg.sample_sizes:
            for t in range(cfg.trials):
                args = (n, cfg.d, cfg.m, cfg.r, int(S), t, cfg.master_seed, cfg.solver, cfg.test_size)
                jobs.append((run_side_trial, args))
                keys.append((n, int(S)))
    outcomes = _map(jobs, cfg.workers)
    counts: dict = {}
    for key, (ok, _) in zip(keys, outcomes):
        counts[key] = counts.get(key, 0) + int(ok)
    cells = [
        PhaseCell(cfg.d, n, int(S), counts[(n, int(S))], cfg.trials)
        for n in cfg.n_values
        for S in cfg.sample_sizes
    ]
    extra = {"small_manifold_dimension": manifold_dimension((cfg.m,) * cfg.d, cfg.r)}
    return PhaseResult(cells, _metadata(cfg, extra))


# ----------------------------------------------------------- chi squared
def run_chi_median(r: int, k_max: int, samples: int, seed) -> list:
    """Empirical median and mean of ``prod_{j<=k} chi2(r)`` for ``k = 1..k_max``.

    Each row also carries the exact mean ``r^k``.
    """
    if samples < 10**4:
        raise ValueError("samples must be at least 10^4")
    if r < 1 or k_max < 1:
        raise ValueError("need r >= 1 and k_max >= 1")
    rng = np.random.default_rng(seed)
    logs = np.zeros(samples)
    rows = []
    for k in range(1, k_max + 1):
        # accumulate in logs so large k does not overflow
        logs += np.log(rng.chisquare(r, size=samples))
        rows.append(
            {
                "k": k,
                "median": float(np.exp(np.median(logs))),
                "mean": float(np.mean(np.exp(logs))),
                "mean_reference": float(r) ** k,
            }
        )
    return rows


# ----------------------------------------------------------------- reports
def run_reports(
    X: TensorTrain,
    sample: SampleSet | None = None,
    sample_size: int | None = None,
    seed=0,
    beta: float = 2.0,
    rip_mode: str = "auto",
    side_factors=None,
) -> dict:
    """Coherence report, repetition bound and tangent RIP estimate as a JSON-ready dict.

    The RIP estimate uses ``sample`` if given, otherwise a fresh uniform
    sample of ``sample_size`` indices drawn under ``seed``; with neither,
    it is omitted.
    """
    rep = coherence_report(X, side_factors=side_factors)
    out = {"coherence": rep.to_dict()}
    big = X.shape if side_factors is None else tuple(Q.shape[0] for Q in side_factors)
    if max(big) >= 16:
        out["repetition_bound"] = {
            "beta": beta,
            "bound": repetition_bound(big, beta),
            "failure_probability": float(max(big)) ** (len(big) * (1 - beta)),
        }
    else:
        out["repetition_bound"] = {"beta": beta, "bound": None, "note": "stated only for n >= 16"}
    if sample is None and sample_size is not None:
        sample = sample_uniform(big, sample_size, seed)
    if sample is not None:
        eps = rip_estimate(X, sample, factors=side_factors, mode=rip_mode)
        out["rip"] = {
            "sample_size": len(sample),
            "rho": sample.rho,
            "epsilon": eps,
            "max_multiplicity": max_multiplicity(sample),
            "mode": rip_mode,
        }
    return out

