"""Command-line interface.

Every subcommand writes its main result as JSON to stdout (or to ``--out``)
and exits with status 0. On failure a JSON object
``{"error": <type>, "message": <text>}`` goes to stderr and the exit status
is 1. Experiment subcommands take an optional ``--config`` JSON file whose
keys are the fields of the matching config class; flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .harness import (
    ExperimentConfig,
    SideExperimentConfig,
    run_chi_median,
    run_phase_plot,
    run_phase_plot_side,
    run_reports,
)
from .io import (
    load_observations,
    load_side_info,
    load_tt,
    read_json,
    save_dense,
    save_observations,
    save_tt,
    write_json,
)
from .rgd import SolverConfig, solve
from .sampling import apply_sampling, sample_uniform
from .sideinfo import SideInfo, q_apply, solve_side
from .tt import gaussian_tt, to_dense


def _ints(text: str) -> list:
    return [int(x) for x in text.replace(",", " ").split()]


def _ranks(text: str):
    vals = _ints(text)
    return vals[0] if len(vals) == 1 else tuple(vals)


def _emit(payload, out=None):
    payload = json.loads(json.dumps(payload, default=_jsonable))
    if out:
        write_json(out, payload)
    json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (tuple, np.ndarray)):
        return list(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def _merge(args, keys) -> dict:
    cfg = dict(read_json(args.config)) if getattr(args, "config", None) else {}
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _tensor_arg(args):
    if args.tt:
        return load_tt(args.tt)
    if args.shape is None or args.ranks is None:
        raise ValueError("give --tt FILE or --shape and --ranks to generate a tensor")
    return gaussian_tt(tuple(args.shape), args.ranks, args.seed)


# ------------------------------------------------------------ subcommands
def cmd_generate(args):
    X = gaussian_tt(tuple(args.shape), args.ranks, args.seed)
    out = {"shape": list(X.shape), "ranks": list(X.ranks), "seed": args.seed}
    if args.side:
        Q = SideInfo(tuple(load_side_info(args.side)))
        X = q_apply(Q, X)
        out["side_info"] = args.side
    if args.tt_out:
        save_tt(args.tt_out, X)
        out["tt"] = args.tt_out
    if args.dense_out:
        save_dense(args.dense_out, to_dense(X))
        out["dense"] = args.dense_out
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    if args.samples:
        save_observations(args.obs_out, apply_sampling(sample_uniform(X.shape, args.samples, rng), X))
        out["observations"] = {"path": args.obs_out, "count": args.samples}
    if args.test_samples:
        save_observations(args.test_out, apply_sampling(sample_uniform(X.shape, args.test_samples, rng), X))
        out["test"] = {"path": args.test_out, "count": args.test_samples}
    return out


def cmd_complete(args):
    obs = load_observations(args.obs, shape=args.shape)
    test = load_observations(args.test, shape=obs.sample.shape) if args.test else None
    cfg = SolverConfig(
        ranks=args.ranks,
        max_iters=args.max_iters,
        success_tol=args.success_tol,
        seed=args.seed,
        record_trace=bool(args.trace),
    )
    truth = load_tt(args.truth) if args.truth else None
    if args.side:
        Q = SideInfo(tuple(load_side_info(args.side)))
        res = solve_side(obs, Q, cfg, truth=truth, test=test)
    else:
        res = solve(obs, cfg, truth=truth, test=test)
    if args.tt_out:
        save_tt(args.tt_out, res.X)
    if args.trace:
        res.trace.to_csv(args.trace)
    return {
        "status": res.status,
        "success": res.success,
        "iterations": res.iterations,
        "relative_error": res.test_error,
        "error_source": "test" if test is not None else ("truth" if truth is not None else "training"),
        "ranks": list(res.X.ranks),
    }


_PHASE_KEYS = ("n", "d_values", "r", "sample_sizes", "trials", "master_seed", "test_size", "workers")
_SIDE_KEYS = ("d", "m", "r", "n_values", "sample_sizes", "trials", "master_seed", "test_size", "workers")


def _phase_common(result, args):
    if args.csv:
        result.to_csv(args.csv)
    if args.meta:
        write_json(args.meta, result.metadata)
    return {
        "cells": [
            {"d": c.d, "n": c.n, "sample_size": c.sample_size, "frequency": c.frequency}
            for c in result.cells
        ],
        "metadata": result.metadata,
    }


def cmd_phase_plot(args):
    cfg = ExperimentConfig(**_merge(args, _PHASE_KEYS + ("solver",)))
    return _phase_common(run_phase_plot(cfg), args)


def cmd_phase_plot_si(args):
    cfg = SideExperimentConfig(**_merge(args, _SIDE_KEYS + ("solver",)))
    return _phase_common(run_phase_plot_side(cfg), args)


def cmd_coherence(args):
    X = _tensor_arg(args)
    side = load_side_info(args.side) if args.side else None
    if side is not None:
        side = list(SideInfo(tuple(side)).factors)
    return run_reports(X, side_factors=side, beta=args.beta)


def cmd_rip(args):
    X = _tensor_arg(args)
    side = list(SideInfo(tuple(load_side_info(args.side))).factors) if args.side else None
    big = X.shape if side is None else tuple(Q.shape[0] for Q in side)
    if args.obs:
        sample = load_observations(args.obs, shape=big).sample
    elif args.samples:
        sample = sample_uniform(big, args.samples, np.random.SeedSequence([args.seed, 2]))
    else:
        raise ValueError("give --obs FILE or --samples COUNT")
    rep = run_reports(X, sample=sample, side_factors=side, rip_mode=args.mode)
    return rep["rip"]


def cmd_chi(args):
    rows = run_chi_median(args.r, args.k_max, args.samples, args.seed)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("k,median,mean,mean_reference\n")
            for row in rows:
                fh.write(f"{row['k']},{row['median']!r},{row['mean']!r},{row['mean_reference']!r}\n")
    return {"r": args.r, "samples": args.samples, "seed": args.seed, "rows": rows}


# ----------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttcomp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def tensor_source(sp):
        sp.add_argument("--tt", help="tensor train file")
        sp.add_argument("--shape", type=_ints, help="generate a Gaussian TT of this shape")
        sp.add_argument("--ranks", type=_ranks, help="TT-ranks of the generated tensor")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--side", help="side-information file; the tensor is the small one")

    g = sub.add_parser("generate", help="random TT, its samples and test set")
    g.add_argument("--shape", type=_ints, required=True)
    g.add_argument("--ranks", type=_ranks, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--side", help="map the generated small tensor through this side information")
    g.add_argument("--tt-out")
    g.add_argument("--dense-out")
    g.add_argument("--samples", type=int)
    g.add_argument("--obs-out", default="observations.csv")
    g.add_argument("--test-samples", type=int)
    g.add_argument("--test-out", default="test.csv")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("complete", help="run RGD on observed entries")
    c.add_argument("--obs", required=True, help="observations (.csv or .json)")
    c.add_argument("--shape", type=_ints, help="tensor shape (required for CSV input)")
    c.add_argument("--ranks", type=_ranks, required=True)
    c.add_argument("--test", help="held-out observations for the success criterion")
    c.add_argument("--truth", help="ground-truth TT file (small tensor with --side)")
    c.add_argument("--side", help="side-information file")
    c.add_argument("--max-iters", type=int, default=500)
    c.add_argument("--success-tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tt-out")
    c.add_argument("--trace", help="write the convergence trace CSV here")
    c.set_defaults(func=cmd_complete)

    def phase_opts(sp, side):
        sp.add_argument("--config", help="JSON experiment config")
        if side:
            sp.add_argument("--d", type=int)
            sp.add_argument("--m", type=int)
            sp.add_argument("--n-values", dest="n_values", type=_ints)
            sp.add_argument("--sample-sizes", dest="sample_sizes", type=_ints)
        else:
            sp.add_argument("--n", type=int)
            sp.add_argument("--d-values", dest="d_values", type=_ints)
            sp.add_argument("--sample-sizes", dest="sample_sizes", type=_ints)
        sp.add_argument("--r", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", dest="master_seed", type=int)
        sp.add_argument("--test-size", dest="test_size", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--csv", help="write the cell table here")
        sp.add_argument("--meta", help="write the metadata JSON here")

    pp = sub.add_parser("phase-plot", help="success frequency over (d, |Omega|)")
    phase_opts(pp, side=False)
    pp.set_defaults(func=cmd_phase_plot)

    ps = sub.add_parser("phase-plot-si", help="side-information success frequency over (n, |Omega|)")
    phase_opts(ps, side=True)
    ps.set_defaults(func=cmd_phase_plot_si)

    co = sub.add_parser("coherence", help="coherence report of a TT")
    tensor_source(co)
    co.add_argument("--beta", type=float, default=2.0)
    co.set_defaults(func=cmd_coherence)

    ri = sub.add_parser("rip-estimate", help="tangent-space RIP constant for a sample")
    tensor_source(ri)
    ri.add_argument("--obs", help="take the sample from this observation file")
    ri.add_argument("--samples", type=int, help="draw a uniform sample of this size")
    ri.add_argument("--mode", choices=("auto", "exact", "power"), default="auto")
    ri.set_defaults(func=cmd_rip)

    ch = sub.add_parser("chi-median", help="median of products of chi-squared variables")
    ch.add_argument("--r", type=int, default=5)
    ch.add_argument("--k-max", type=int, default=10)
    ch.add_argument("--samples", type=int, default=10**6)
    ch.add_argument("--seed", type=int, default=0)
    ch.add_argument("--csv")
    ch.set_defaults(func=cmd_chi)

    for sp in (g, c, pp, ps, co, ri, ch):
        sp.add_argument("--out", help="also write the JSON result here")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload = args.func(args)
        _emit(payload, args.out)
    except Exception as exc:  # surfaced as machine-readable error
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
