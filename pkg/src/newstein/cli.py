"""Command-line entry point: ``newstein {generate,run,fit,diagnose,spectrum}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .bench import BenchConfig, diagnose, format_summary, read_trace, run_benchmark, write_trace
from .data import (SpikedModelSpec, generate_spiked, load_dataset, load_metadata,
                   save_dataset, standardize)
from .errors import NewSteinError
from .family import FAMILIES
from .optimizers import METHODS, OptimizerConfig, optimize
from .stein import subsample_covariance
from .theory import suggest_rank, suggest_sample_size


def _label(value: str):
    try:
        return int(value)
    except ValueError:
        return value


def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV or libsvm file")
    p.add_argument("--format", choices=["csv", "libsvm"], default="csv")
    p.add_argument("--label-column", type=_label, default=-1,
                   help="index or header name of the label column (default: last)")
    p.add_argument("--positive-class", type=float, default=None,
                   help="binarise labels as this class vs rest")
    p.add_argument("--family", choices=sorted(FAMILIES), default="logistic")
    std = p.add_mutually_exclusive_group()
    std.add_argument("--standardize", dest="standardize", action="store_true", default=None,
                     help="centre and scale columns (default: only for non-generated data)")
    std.add_argument("--no-standardize", dest="standardize", action="store_false")


def _load(args):
    data = load_dataset(args.data, args.format, args.label_column, args.family,
                        positive_class=args.positive_class)
    meta = load_metadata(args.data)
    do_std = args.standardize if args.standardize is not None else "generator" not in meta
    if do_std:
        data, _ = standardize(data)
    return data


def _seed(value):
    env = os.environ.get("NEWST_SEED")
    return int(env) if env not in (None, "") else value


def cmd_generate(args):
    spec = SpikedModelSpec(n=args.n, p=args.p, r=args.r, theta=args.theta,
                           sigma2=args.sigma2, seed=_seed(args.seed), family=args.family)
    data = generate_spiked(spec)
    path = save_dataset(data, args.out)
    print(f"wrote {path} (n={data.n}, p={data.p}, r={spec.r}, family={spec.family})")
    return 0


def cmd_run(args):
    cfg = BenchConfig.from_json(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    report = run_benchmark(cfg)
    print(format_summary(report.rows), end="")
    print(f"reference: {report.reference_method}; outputs in {report.output_dir}")
    return 0


def cmd_fit(args):
    data = _load(args)
    cfg = OptimizerConfig(method=args.method, gamma=args.gamma, sample_size=args.sample_size,
                          sample_factor=args.sample_factor, rank=args.rank,
                          tol_eps=args.eps, max_iter=args.max_iter, seed=_seed(args.seed), line_search=args.line_search,
                          keep_iterates=True)
    trace = optimize(data, args.family, None, cfg)
    np.set_printoptions(precision=6, suppress=False, linewidth=100)
    print(f"method       {trace.method}")
    print(f"terminated   {trace.termination} after {trace.iterations} iterations "
          f"({trace.elapsed_seconds:.3f} s, tol {cfg.tol_eps:g})")
    last = trace.records[-1]
    print(f"objective    {last.objective:.12g}")
    print(f"grad norm    {last.grad_norm:.3e}")
    for k, v in trace.params.items():
        print(f"{k:<12} {v}")
    if trace.warnings:
        print(f"warnings     {len(trace.warnings)} (first: {trace.warnings[0]})")
    print("beta")
    print(trace.beta)
    try:
        rep = diagnose(trace, reference=trace.beta)
        print(f"composite fit: tau1={rep['tau1']:.4g} tau2={rep['tau2']:.4g} "
              f"R2={rep['r_squared']:.3f} transition={rep['transition_iter']}")
    except NewSteinError as exc:
        print(f"composite fit unavailable: {exc}")
    if args.trace_out:
        write_trace(trace, args.trace_out)
        print(f"trace written to {args.trace_out}")
    return 0


def _read_reference(path):
    path = Path(path)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            meta = json.load(fh)
        return np.asarray(meta["beta"] if isinstance(meta, dict) else meta, dtype=float)
    return np.loadtxt(path, delimiter=",").reshape(-1)


def cmd_diagnose(args):
    trace = read_trace(args.trace)
    ref = _read_reference(args.reference) if args.reference else None
    rep = diagnose(trace, reference=ref, eps=args.eps)
    print(f"trace          {args.trace} ({rep['method']}, {rep['points']} error points, "
          f"{rep['error_kind']})")
    print(f"tau1           {rep['tau1']:.6g}")
    print(f"tau2           {rep['tau2']:.6g}")
    print(f"R^2            {rep['r_squared']:.4f}")
    print(f"transition_iter {rep['transition_iter']}")
    if rep["J_star"] is not None:
        print(f"iteration bound {rep['J_star']} (xi* = {rep['xi_star']:.4g}, "
              f"theta0 = {rep['theta0']:.4g}, eps = {rep['eps']:g})")
    else:
        print(f"iteration bound unavailable: {rep['bound_note']}")
    return 0


def cmd_spectrum(args):
    data = _load(args)
    size = args.sample_size or suggest_sample_size(max(data.p, 2), data.n)
    cov = subsample_covariance(data, size, _seed(args.seed))
    spec = np.linalg.eigvalsh(cov.M)[::-1]
    sug = suggest_rank(spec)
    print(f"sample covariance from |S| = {size} of n = {data.n} rows, p = {data.p}")
    top = spec[: args.top]
    for i, v in enumerate(top, start=1):
        gap = f"{sug.relative_gaps[i - 1]:.4f}" if i <= len(sug.relative_gaps) else ""
        print(f"{i:>4}  {v:14.6g}  {gap}")
    if args.top < len(spec):
        print(f"  ... {len(spec) - args.top} more (smallest {spec[-1]:.6g})")
    print(f"suggested rank r = {sug.rank}")
    if sug.warning:
        print(f"warning: {sug.warning}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="newstein",
        description="Newton-Stein training for GLMs and optimizer benchmarks.",
    )
    parser.add_argument("--version", action="version", version="newstein 0.1.0 "
                        f"(kernels: {kernels.BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic spiked-covariance dataset")
    g.add_argument("--n", type=int, default=50_000)
    g.add_argument("--p", type=int, default=100)
    g.add_argument("--r", type=int, default=3)
    g.add_argument("--theta", type=float, nargs="+", default=None,
                   help="spike magnitudes, descending (default log-spaced in [10, 100])")
    g.add_argument("--sigma2", type=float, default=1.0)
    g.add_argument("--family", choices=sorted(FAMILIES), default="logistic")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="CSV path; a .meta.json sidecar is added")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run a benchmark from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--output-dir", default=None)
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="train one method and print beta and diagnostics")
    _add_data_args(f)
    f.add_argument("--method", choices=METHODS, default="newst")
    f.add_argument("--gamma", type=float, default=None)
    f.add_argument("--sample-size", type=int, default=None)
    f.add_argument("--sample-factor", type=float, default=1.0,
                   help="constant c in |S| = c p ln p when --sample-size is not given")
    f.add_argument("--rank", type=int, default=None)
    f.add_argument("--eps", type=float, default=1e-8)
    f.add_argument("--max-iter", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--line-search", choices=["armijo"], default=None)
    f.add_argument("--trace-out", default=None)
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="composite-rate fit and iteration bound for a trace")
    d.add_argument("--trace", required=True)
    d.add_argument("--reference", default=None,
                   help="reference beta (CSV, or a trace .meta.json); needs an iterates file")
    d.add_argument("--eps", type=float, default=None)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("spectrum", help="sub-sampled covariance spectrum and rank suggestion")
    _add_data_args(s)
    s.add_argument("--sample-size", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"newstein {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
