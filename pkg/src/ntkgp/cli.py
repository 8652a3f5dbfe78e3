"""Command-line entry point: ``ntkgp <subcommand> [options]``.

Exit codes: 0 on success, 2 for usage or configuration errors, 1 when a
computation fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import datagen as dg
from .dataio import ExperimentRecord, write_record, write_table
from .errors import ContractError, NtkGpError, ShapeError
from .experiments import (DEFAULT_DEPTHS, DEFAULT_SIZES, RealConfig, SyntheticConfig,
                          cells_to_dicts, run_fit_real, run_posterior_match)
from .kernels import (KernelSpec, MaternParams, NtkParams, gaussian_eval, laplace_eval,
                      ntk_beta_grad, ntk_eval, ntk_eval_normalized, ntk_shallow_limit)
from .matching import match_bias_lengthscale, sample_sphere_pairs
from .oracle import FiniteNetConfig, empirical_ntk

log = logging.getLogger("ntkgp")


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


def _vector(text):
    try:
        v = np.array([float(t) for t in text.replace(" ", "").split(",") if t], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if v.size == 0:
        raise argparse.ArgumentTypeError("empty vector")
    return v


def _depths(value):
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [t for t in str(value).split(",") if t.strip()]
    try:
        out = tuple(int(d) for d in items)
    except (TypeError, ValueError):
        raise UsageError(f"depths must be integers, got {value!r}") from None
    if not out or min(out) < 0:
        raise UsageError("depths must be a non-empty list of nonnegative integers")
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(args):
    if args.x is None:
        raise UsageError("--x is required (on the command line or in --config)")
    x = args.x
    z = args.z if args.z is not None else args.x
    if x.shape != z.shape:
        raise UsageError(f"--x and --z lengths differ ({x.size} vs {z.size})")
    if args.shallow_limit:
        value = ntk_shallow_limit(x, z)
    elif args.kernel == "ntk":
        p = NtkParams(args.depth, args.beta, normalization=args.normalization)
        if args.grad_beta:
            value = ntk_beta_grad(x, z, p)
        elif args.unnormalized:
            value = ntk_eval(x, z, p)
        else:
            value = ntk_eval_normalized(x, z, p)
    else:
        p = MaternParams(args.ell, "half" if args.kernel == "laplace" else "inf")
        value = (laplace_eval if args.kernel == "laplace" else gaussian_eval)(x, z, p)
    print(repr(float(value)))
    return {"value": float(value)}, []


def cmd_match_kernels(args):
    rep = match_bias_lengthscale(args.dim, args.n, args.depth, args.beta_max, args.grid_size,
                                 args.seed, args.sampler)
    print(f"depth={rep.depth} beta={rep.beta:.6g} length_scale={rep.length_scale:.6g} "
          f"variance={rep.variance:.6g} status={rep.status}")
    artifacts = []
    if args.out:
        c = rep.curve
        artifacts.append(write_table(Path(args.out) / f"match_kernels_D{args.depth}.csv",
                                     ["beta", "mean_length_scale", "variance", "pairs_used"],
                                     [c["beta"], c["mean_length_scale"], c["variance"], c["pairs_used"]]))
    return rep.summary(), artifacts


def _print_cells(cells):
    print("depth,kernel,status,rmse,r2,rho,match_rmse,match_rho")
    for c in cells:
        m = c.metrics
        vals = [m.get(k) for k in ("rmse", "r2", "rho", "match_rmse", "match_rho")]
        txt = ",".join("" if v is None else f"{v:.6g}" for v in vals)
        print(f"{c.depth if c.depth is not None else ''},{c.kernel},{c.status},{txt}")


def cmd_posterior_match(args):
    cfg = SyntheticConfig(dataset=args.dataset, n=args.n, train_fraction=args.train_fraction,
                          depths=_depths(args.depths), noisy=args.noisy,
                          normalize=args.space == "sphere", x_rescale=args.x_rescale,
                          y_rescale=not args.no_y_rescale, divide_by=args.divide_by,
                          n_restart=args.n_restart, seed=args.seed)
    cells, curves, test = run_posterior_match(cfg)
    _print_cells(cells)
    artifacts = []
    if args.out:
        d = test.X.shape[1]
        for depth, means in curves.items():
            names = [k for k in ("ntk", "laplace", "gaussian") if k in means]
            header = [f"x{i + 1}" for i in range(d)] + ["y"] + [f"f_{k}" for k in names]
            cols = [test.X[:, i] for i in range(d)] + [test.y] + [means[k] for k in names]
            artifacts.append(write_table(Path(args.out) / f"posterior_{args.dataset}_D{depth}.csv",
                                         header, cols))
    status = "ok" if all(c.status != "failed" for c in cells) else "partial"
    return {"cells": cells_to_dicts(cells), "status": status}, artifacts


def cmd_fit_real(args):
    if not args.path:
        raise UsageError("--path is required (datasets are not downloaded)")
    cfg = RealConfig(dataset=args.dataset, path=args.path, space=args.space,
                     depths=_depths(args.depths), divide_by=args.divide_by,
                     n_restart=args.n_restart, seed=args.seed)
    cells, preds, y_true = run_fit_real(cfg)
    _print_cells(cells)
    artifacts = []
    if args.out and preds:
        keys = list(preds)
        header = ["y"] + [k if d is None else f"{k}_D{d}" for k, d in keys]
        artifacts.append(write_table(Path(args.out) / f"predictions_{args.dataset}_{args.space}.csv",
                                     header, [y_true] + [preds[k] for k in keys]))
    return {"cells": cells_to_dicts(cells)}, artifacts


def cmd_oracle(args):
    if args.x is None:
        X, Z = sample_sphere_pairs(args.dim, 1, args.seed, "gaussian")
        x, z = X[0], Z[0]
    else:
        x, z = args.x, args.z if args.z is not None else args.x
        if x.shape != z.shape:
            raise UsageError("--x and --z lengths differ")
    cfg = FiniteNetConfig(args.depth, args.width, args.beta, args.samples, args.seed)
    mean, stderr = empirical_ntk(x, z, cfg)
    exact = ntk_eval(x, z, NtkParams(args.depth, args.beta))
    diff = mean - exact
    if stderr > 0:
        zscore = diff / stderr
    else:  # zero-variance estimator (no hidden layer): exact or infinitely far
        zscore = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(exact)) else float(np.copysign(np.inf, diff))
    rel = abs(mean - exact) / abs(exact) if exact != 0 else float("inf")
    print(f"empirical={mean:.6g} stderr={stderr:.3g} analytic={exact:.6g} "
          f"z={zscore:.3g} rel_diff={rel:.3g}")
    return {"empirical": mean, "stderr": stderr, "analytic": exact, "z": zscore,
            "relative_difference": rel}, []


def cmd_generate(args):
    n = args.n if args.n is not None else DEFAULT_SIZES.get(args.dataset, 100)
    ds = dg.generate(args.dataset, n, args.seed, args.noisy)
    if args.space == "sphere":
        ds = dg.Dataset(dg.normalize_to_sphere(ds.X), ds.y, ds.provenance, normalized=True)
    d = ds.X.shape[1]
    header = [f"x{i + 1}" for i in range(d)] + ["y"]
    cols = [ds.X[:, i] for i in range(d)] + [ds.y]
    artifacts = []
    if args.out:
        artifacts.append(write_table(Path(args.out) / f"{args.dataset}.csv", header, cols))
    else:
        print(",".join(header))
        for row in zip(*cols):
            print(",".join(repr(float(v)) for v in row))
    return {"n": len(ds), "dim": d}, artifacts


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--out", default=None, help="directory for records and tables")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="flat JSON file of option values")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="ntkgp", description="NTK and Matern Gaussian-process experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("eval", help="evaluate a kernel at one pair of inputs")
    p.add_argument("--kernel", choices=["ntk", "laplace", "gaussian"], default="ntk")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--ell", type=float, default=1.0)
    p.add_argument("--x", type=_vector)
    p.add_argument("--z", type=_vector, default=None)
    p.add_argument("--normalization", choices=["diagonal", "constant"], default="diagonal")
    p.add_argument("--unnormalized", action="store_true", help="print the raw recursion value")
    p.add_argument("--grad-beta", action="store_true", help="derivative of the normalised NTK in beta")
    p.add_argument("--shallow-limit", action="store_true", help="large-bias limit of the one-layer kernel")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("match-kernels", help="bias grid search for consistent Laplace length-scales")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--beta-max", type=float, default=None)
    p.add_argument("--grid-size", type=int, default=200)
    p.add_argument("--sampler", choices=["uniform", "gaussian"], default="uniform")
    p.set_defaults(func=cmd_match_kernels)
    subs["match-kernels"] = p

    p = sub.add_parser("posterior-match", help="fit NTK GPs and match Matern posterior means")
    p.add_argument("--dataset", choices=sorted(DEFAULT_SIZES), default="parametric")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--depths", default=",".join(map(str, DEFAULT_DEPTHS)))
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--space", choices=["sphere", "Rd"], default="sphere")
    p.add_argument("--x-rescale", action="store_true")
    p.add_argument("--no-y-rescale", action="store_true")
    p.add_argument("--divide-by", choices=["variance", "std"], default="variance")
    p.add_argument("--n-restart", type=int, default=9)
    p.set_defaults(func=cmd_posterior_match)
    subs["posterior-match"] = p

    p = sub.add_parser("fit-real", help="fit NTK, Laplace and Gaussian GPs to a real dataset")
    p.add_argument("--dataset", choices=["concrete", "fire"], default="concrete")
    p.add_argument("--path", default=None)
    p.add_argument("--space", choices=["Rd", "sphere"], default="Rd")
    p.add_argument("--depths", default=",".join(map(str, DEFAULT_DEPTHS)))
    p.add_argument("--divide-by", choices=["variance", "std"], default="variance")
    p.add_argument("--n-restart", type=int, default=9)
    p.set_defaults(func=cmd_fit_real)
    subs["fit-real"] = p

    p = sub.add_parser("oracle", help="compare a sampled finite network's NTK with the recursion")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--width", type=int, default=1000)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--x", type=_vector, default=None)
    p.add_argument("--z", type=_vector, default=None)
    p.set_defaults(func=cmd_oracle)
    subs["oracle"] = p

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    p.add_argument("--dataset", choices=list(dg.GENERATORS), default="parametric")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--space", choices=["Rd", "sphere"], default="Rd")
    p.set_defaults(func=cmd_generate)
    subs["generate"] = p

    for p in subs.values():
        _common(p)
    return parser, subs


_NOT_CONFIGURABLE = {"func", "command", "config", "verbose"}


def _apply_config(parser, subs, args, argv):
    """Use values from ``--config`` as defaults, so explicit flags still win."""
    try:
        settings = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(settings, dict):
        raise UsageError("config must be a flat JSON object")
    settings = {k.replace("-", "_"): v for k, v in settings.items()}
    allowed = set(vars(args)) - _NOT_CONFIGURABLE
    unknown = sorted(set(settings) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {unknown}")
    bad = [k for k, v in settings.items() if isinstance(v, (dict, list)) and k != "depths"]
    if bad:
        raise UsageError(f"config values must be scalars: {bad}")
    for k in ("x", "z"):
        if isinstance(settings.get(k), str):
            settings[k] = _vector(settings[k])
    subs[args.command].set_defaults(**settings)
    return parser.parse_args(argv)


def replay_config(args):
    """Flat, JSON-serialisable settings that reproduce this run via ``--config``."""
    out = {}
    for k, v in vars(args).items():
        if k in _NOT_CONFIGURABLE or k == "out":
            continue
        if isinstance(v, np.ndarray):
            v = ",".join(repr(float(t)) for t in v)
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            args = _apply_config(parser, subs, args, argv)
        t0 = time.perf_counter()
        result, artifacts = args.func(args)
        elapsed = time.perf_counter() - t0
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError, ContractError, ShapeError) as exc:
        print(f"ntkgp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NtkGpError, ArithmeticError, ValueError, OSError) as exc:
        print(f"ntkgp {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    if args.out:
        out = Path(args.out)
        config = replay_config(args)
        cfg_path = out / f"{args.command}_config.json"
        cfg_path.parent.mkdir(parents=True, exist_ok=True)
        cfg_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        status = result.pop("status", "ok") if isinstance(result, dict) else "ok"
        record = ExperimentRecord(command=args.command, config=config,
                                  hyperparameters={}, metrics=result, timing=elapsed,
                                  seed=args.seed, artifacts=[str(a) for a in artifacts] + [str(cfg_path)],
                                  status=status)
        write_record(record, out / f"{args.command}_record.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
