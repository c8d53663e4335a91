"""Command-line entry points.

Subcommands: ``gen-data`` (write synthetic datasets), ``estimate``
(scale/noise parameter estimates from minibatches), ``solve`` (run the
active probing loop and save the posterior), ``precond`` (build and save
a pre-conditioner), ``run`` (one optimizer run -> CSV), ``compare``
(several optimizers on a shared problem -> merged CSV + summary).

Exit codes: 0 success, 1 configuration error, 2 numerical failure or a
diverged run (outputs are still written when possible).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as datagen
from .harness import (
    ConfigError,
    ExperimentConfig,
    build_problem,
    compare,
    construct_preconditioner,
    load_config,
    merge_config,
    run_experiment,
    write_comparison_csv,
    write_run_csv,
)
from .inference import save_posterior
from .linalg import SolveFailure
from .precond import precond_to_dict
from .solver import EstimationError, SolverConfig, estimate_parameters, run_inference


def _parse_set_args(items):
    """Turn ``a.b=value`` override strings into a nested dict."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set key {key!r} conflicts with an earlier override")
        node[parts[-1]] = value
    return out


def _config_from_args(args, extra=None):
    overrides = _parse_set_args(getattr(args, "set", None))
    for name in ("optimizer", "lr", "steps", "epochs", "seed", "batch_size"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "timing", False):
        overrides["timing"] = True
    if extra:
        overrides = merge_config(extra, overrides)
    if args.config is not None:
        return load_config(args.config, overrides)
    return ExperimentConfig.from_dict(overrides)


def _add_config_flags(p, with_run_flags=False):
    p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set problem.n_samples=4096")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    if with_run_flags:
        p.add_argument("--optimizer")
        p.add_argument("--lr", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--epochs", type=float)
        p.add_argument("--timing", action="store_true",
                       help="record wall-clock times (breaks byte-level reproducibility)")


def _cmd_gen_data(args):
    if args.kind == "regression":
        d = args.input_dim or 21
        n_features = args.n_features or min(253, d + d * (d + 1) // 2 + 1)
        X, y = datagen.gen_regression(args.seed or 0, args.n_samples,
                                      input_dim=d, n_features=n_features,
                                      noise=args.noise)
    elif args.kind == "classification":
        X, y = datagen.gen_classification(args.seed or 0, args.n_samples,
                                          input_dim=args.input_dim or 784,
                                          separation=args.separation)
    elif args.kind == "blobs":
        X, y = datagen.gen_blobs(args.seed or 0, args.n_samples,
                                 input_dim=args.input_dim or 20,
                                 n_classes=args.n_classes,
                                 separation=args.separation)
    else:
        raise ConfigError(f"unknown dataset kind {args.kind!r}")
    datagen.write_dataset(args.out, X, y)
    print(f"wrote {X.shape[0]} samples x {X.shape[1]} features to {args.out}")
    return 0


def _cmd_estimate(args):
    cfg = _config_from_args(args)
    bundle = build_problem(cfg.problem)
    oracle = bundle.make_oracle(cfg.batch_size, cfg.seed)
    w = bundle.init_w(cfg.seed)
    est = estimate_parameters(oracle, w, cfg.solver.init_samples, mode=cfg.solver.mode)
    print(json.dumps({
        "mode": cfg.solver.mode,
        "b0": est.b0, "w0": est.w0, "lam0": est.lam0,
        "grad_norm": float(np.linalg.norm(est.mean_grad)),
        "n": int(est.mean_grad.size),
        "data_read": int(oracle.data_read),
    }, indent=2))
    return 0


def _iteration_log_writer(path, timing):
    fh = open(path, "w")
    fh.write("iteration,probe_norm,data_read,wall_ms\n")

    def cb(record):
        wall = record.wall_ms if timing else 0.0
        fh.write(f"{record.iteration},{record.probe_norm!r},"
                 f"{record.data_read},{wall!r}\n")

    return fh, cb


def _cmd_solve(args):
    cfg = _config_from_args(args)
    bundle = build_problem(cfg.problem)
    oracle = bundle.make_oracle(cfg.batch_size, cfg.seed)
    w = bundle.init_w(cfg.seed)
    est = estimate_parameters(oracle, w, cfg.solver.init_samples, mode="full")
    solver_cfg = SolverConfig(iterations=cfg.solver.iterations,
                              init_samples=cfg.solver.init_samples,
                              normalize_probes=cfg.solver.normalize_probes,
                              mode="full")
    fh = cb = None
    if args.log:
        fh, cb = _iteration_log_writer(args.log, cfg.timing)
    try:
        post = run_inference(oracle, w, est, solver_cfg, callback=cb)
    finally:
        if fh is not None:
            fh.close()
    save_posterior(args.out, post)
    print(f"wrote posterior (n={post.n}, m={post.m}, b0={post.b0:g}) to {args.out}")
    print(f"data_read={oracle.data_read}")
    return 0


def _cmd_precond(args):
    cfg = _config_from_args(args)
    bundle = build_problem(cfg.problem)
    oracle = bundle.make_oracle(cfg.batch_size, cfg.seed)
    w = bundle.init_w(cfg.seed)
    precond, _, post, _ = construct_preconditioner(oracle, w, cfg.solver, cfg.lr)
    with open(args.out, "w") as fh:
        json.dump(precond_to_dict(precond), fh)
        fh.write("\n")
    print(f"wrote preconditioner (n={precond.spectral.n}, k={precond.spectral.k}, "
          f"alpha={precond.alpha:g}) to {args.out}")
    print(f"posterior rank m={post.m}, data_read={oracle.data_read}")
    return 0


def _cmd_run(args):
    cfg = _config_from_args(args)
    bundle = build_problem(cfg.problem)
    result = run_experiment(bundle, cfg)
    write_run_csv(args.out, result.records)
    final = result.final
    print(f"wrote {len(result.records)} records to {args.out}")
    print(f"final: step={final.step} data_read={final.data_read} "
          f"train_loss={final.train_loss:g} diverged={result.diverged}")
    return 2 if result.diverged else 0


def _cmd_compare(args):
    if args.config is None:
        raise ConfigError("compare requires --config")
    try:
        with open(args.config) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(payload, dict) or "runs" not in payload:
        raise ConfigError('compare config must be {"base": {...}, "runs": [{...}, ...]}')
    base = payload.get("base", {})
    overrides = _parse_set_args(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    configs = []
    for entry in payload["runs"]:
        merged = merge_config(merge_config(base, entry), overrides)
        configs.append(ExperimentConfig.from_dict(merged))
    result = compare(configs)
    write_comparison_csv(args.out, result.labeled_records)
    text = result.summary_text()
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text)
    print(f"wrote {len(result.labeled_records)} records to {args.out}")
    print(text, end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hessprec",
        description="Low-rank Hessian inference and pre-conditioned SGD experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("--kind", required=True,
                   choices=("regression", "classification", "blobs"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", dest="n_samples", type=int, required=True)
    p.add_argument("--input-dim", dest="input_dim", type=int)
    p.add_argument("--n-features", dest="n_features", type=int,
                   help="regression only: number of distinct monomials the truth uses")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--n-classes", dest="n_classes", type=int, default=10)
    p.add_argument("--separation", type=float, default=3.0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("estimate", help="estimate scale/noise parameters")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("solve", help="run active probing, save the posterior")
    _add_config_flags(p, with_run_flags=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write per-iteration CSV log here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("precond", help="build a pre-conditioner, save it")
    _add_config_flags(p, with_run_flags=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_precond)

    p = sub.add_parser("run", help="run one optimizer, write the curve CSV")
    _add_config_flags(p, with_run_flags=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several optimizers on one problem")
    p.add_argument("--config", required=False)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="write the text summary here as well")
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:  # ConfigError included
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except (SolveFailure, EstimationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
