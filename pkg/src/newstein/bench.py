"""Benchmark harness: run several optimizers on one dataset and write reports.

Output layout under ``output_dir``::

    traces/<method>_r<k>.csv        t,objective,grad_norm,step_norm,elapsed_seconds,projected,warnings
    traces/<method>_r<k>.meta.json  termination, tolerance, parameters, final beta
    traces/<method>_r<k>.iterates.csv   (only with keep_iterates)
    summary.json, summary.txt       one row per (method, repetition)
    curves.csv                      long format: log10 objective gap vs iteration and time
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import SpikedModelSpec, generate_spiked, load_dataset, load_metadata, standardize
from .errors import ConfigError, InfeasibleStart
from .family import get_family
from .optimizers import METHODS, IterationTrace, IterRecord, OptimizerConfig, optimize
from .theory import IterationBoundInput, fit_composite, iteration_bound

TRACE_COLUMNS = ["t", "objective", "grad_norm", "step_norm", "elapsed_seconds",
                 "projected", "warnings"]
GAP_FLOOR = 1e-16
_OPT_FIELDS = {f.name for f in fields(OptimizerConfig)}


@dataclass
class BenchConfig:
    dataset: dict
    family: str = "logistic"
    methods: list = field(default_factory=lambda: ["newst", "newton", "gd"])
    defaults: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    output_dir: str = "bench_out"
    seed: int = 0
    repetitions: int = 1
    keep_iterates: bool = False
    parallel: bool = False

    def __post_init__(self):
        env = os.environ.get("NEWST_SEED")
        if env not in (None, ""):
            self.seed = int(env)
        self.validate()

    def validate(self):
        if not self.methods:
            raise ConfigError("method list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate methods in list")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        get_family(self.family)
        if not isinstance(self.dataset, dict) or not (
            ("generate" in self.dataset) ^ ("path" in self.dataset)
        ):
            raise ConfigError("dataset needs exactly one of 'generate' or 'path'")
        for name, opts in [("defaults", self.defaults), *self.overrides.items()]:
            unknown = set(opts) - _OPT_FIELDS - {"method"}
            if unknown:
                raise ConfigError(f"{name}: unknown optimizer options {sorted(unknown)}")
        for m in self.overrides:
            if m not in METHODS:
                raise ConfigError(f"override for unknown method {m!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a 'dataset' entry")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "BenchConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)

    def optimizer_config(self, method: str) -> OptimizerConfig:
        opts = dict(self.defaults)
        opts.update(self.overrides.get(method, {}))
        opts.update(method=method, seed=self.seed,
                    keep_iterates=opts.get("keep_iterates", self.keep_iterates))
        return OptimizerConfig(**opts)


def obtain_dataset(cfg: BenchConfig):
    src = cfg.dataset
    if "generate" in src:
        spec = dict(src["generate"])
        spec.setdefault("seed", cfg.seed)
        spec.setdefault("family", cfg.family)
        return generate_spiked(SpikedModelSpec(**spec))
    data = load_dataset(src["path"], src.get("format", "csv"), src.get("label_column", -1),
                        cfg.family, src.get("header"), src.get("positive_class"),
                        src.get("n_features"))
    std = src.get("standardize")
    if std is None:
        std = "generator" not in load_metadata(src["path"])
    if std:
        data, _ = standardize(data)
    return data


def flops_estimate(method, n, p, iterations, sample_size=0, rank=0) -> float:
    """Rough operation count: per-iteration cost times (iterations + 1) plus setup."""
    steps = iterations + 1
    if method == "newst":
        return steps * (n * p + p * rank) + sample_size * p * p + rank * p * p
    if method == "newton":
        return steps * (n * p * p + p ** 3)
    if method == "bfgs":
        return steps * (n * p + p * p)
    return steps * n * p


# ------------------------------------------------------------ trace I/O


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace(trace: IterationTrace, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.t, _fmt(r.objective), _fmt(r.grad_norm), _fmt(r.step_norm),
                        _fmt(r.elapsed_seconds), int(r.projected), " | ".join(r.warnings)])
    meta = {
        "method": trace.method,
        "termination": trace.termination,
        "tol_eps": trace.tol_eps,
        "params": trace.params,
        "beta": None if trace.beta is None else [float(v) for v in trace.beta],
    }
    with open(path.with_suffix(".meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    if trace.iterates is not None:
        np.savetxt(path.with_suffix(".iterates.csv"), np.array(trace.iterates),
                   fmt="%.17g", delimiter=",")
    return path


def read_trace(path) -> IterationTrace:
    """Parse a trace CSV (and its sidecar files when present)."""
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != TRACE_COLUMNS[:5]:
            raise ValueError(f"{path}: not a trace file (header {header})")
        for row in reader:
            warns = tuple(row[6].split(" | ")) if len(row) > 6 and row[6] else ()
            projected = bool(int(row[5])) if len(row) > 5 and row[5] else False
            records.append(IterRecord(int(row[0]), float(row[1]), float(row[2]),
                                      float(row[3]), float(row[4]), projected, warns))
    trace = IterationTrace(method=path.stem.split("_r")[0], records=records)
    meta_path = path.with_suffix(".meta.json")
    if meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        trace.method = meta["method"]
        trace.termination = meta["termination"]
        trace.tol_eps = meta["tol_eps"]
        trace.params = meta["params"]
        trace.beta = None if meta["beta"] is None else np.array(meta["beta"])
    it_path = path.with_suffix(".iterates.csv")
    if it_path.exists():
        trace.iterates = list(np.loadtxt(it_path, delimiter=",", ndmin=2))
    return trace


# ------------------------------------------------------------ diagnostics


def trace_errors(trace: IterationTrace, reference=None) -> tuple[np.ndarray, str]:
    """Distances to the reference point, or a tail-sum proxy from step norms.

    Without iterates, e_t is approximated by sum_{k >= t} ||beta_{k+1} - beta_k||,
    an upper bound on ||beta_t - beta_final||.
    """
    if trace.iterates is not None and reference is not None:
        ref = np.asarray(reference, dtype=float)
        errs = np.array([np.linalg.norm(b - ref) for b in trace.iterates])
        return errs, "distance to reference"
    steps = trace.column("step_norm")
    steps = steps[np.isfinite(steps)]
    return np.cumsum(steps[::-1])[::-1], "tail sum of step norms"


def diagnose(trace: IterationTrace, reference=None, eps=None) -> dict:
    errs, kind = trace_errors(trace, reference)
    fit = fit_composite(errs)
    report = {
        "method": trace.method,
        "error_kind": kind,
        "tau1": fit.tau1,
        "tau2": fit.tau2,
        "r_squared": fit.r_squared,
        "transition_iter": fit.transition_iter,
        "points": fit.n_points,
        "theta0": float(errs[0]),
    }
    eps = eps if eps is not None else (trace.tol_eps if math.isfinite(trace.tol_eps) else 1e-8)
    report["eps"] = eps
    try:
        b = iteration_bound(IterationBoundInput(fit.tau1, fit.tau2, float(errs[0]), eps))
        report.update(xi_star=b.xi_star, J_star=b.J_star)
    except (InfeasibleStart, ValueError) as exc:
        report.update(xi_star=None, J_star=None, bound_note=str(exc))
    return report


# ------------------------------------------------------------ running


@dataclass
class BenchReport:
    rows: list
    traces: dict
    reference_method: Optional[str]
    reference_beta: Optional[np.ndarray]
    best_objective: float
    output_dir: Path


def _run_one(data, fam, ocfg):
    try:
        return optimize(data, fam, None, ocfg), None
    except Exception as exc:  # harness isolation: one failure never stops siblings
        return None, f"{type(exc).__name__}: {exc}"


def _pick_reference(traces: dict):
    conv = {k: tr for k, tr in traces.items() if tr is not None and tr.termination == "converged"}
    for (m, rep), tr in sorted(conv.items()):
        if m == "newton":
            return m, tr.beta
    if not conv:
        return None, None
    (m, _), tr = min(conv.items(), key=lambda kv: kv[1].records[-1].grad_norm)
    return m, tr.beta


def run_benchmark(cfg: BenchConfig, data=None) -> BenchReport:
    fam = get_family(cfg.family)
    data = data if data is not None else obtain_dataset(cfg)
    out = Path(cfg.output_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)

    jobs = [(m, rep) for rep in range(cfg.repetitions) for m in cfg.methods]
    if cfg.parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(
                lambda job: _run_one(data, fam, cfg.optimizer_config(job[0])), jobs))
    else:
        results = [_run_one(data, fam, cfg.optimizer_config(m)) for m, _ in jobs]

    traces, failures = {}, {}
    for job, (tr, err) in zip(jobs, results):
        traces[job] = tr
        if err is not None:
            failures[job] = err
        else:
            write_trace(tr, out / "traces" / f"{job[0]}_r{job[1]}.csv")

    ref_method, ref_beta = _pick_reference(traces)
    objs = [r.objective for tr in traces.values() if tr is not None
            for r in tr.records if math.isfinite(r.objective)]
    best = min(objs) if objs else float("nan")

    rows = []
    for (m, rep), tr in traces.items():
        row = {"method": m, "repetition": rep, "tolerance": cfg.optimizer_config(m).tol_eps}
        if tr is None:
            row.update(elapsed_sec=None, iterations=None, terminated="failed",
                       final_objective=None, warnings=[failures[(m, rep)]], params={},
                       flops_estimate=None)
        else:
            final_obj = tr.records[-1].objective
            row.update(
                elapsed_sec=tr.elapsed_seconds,
                iterations=tr.iterations,
                terminated=tr.termination,
                final_objective=final_obj if math.isfinite(final_obj) else None,
                warnings=sorted(set(tr.warnings)),
                params=tr.params,
                flops_estimate=flops_estimate(m, data.n, data.p, tr.iterations,
                                              tr.params.get("sample_size", 0),
                                              tr.params.get("rank", 0)),
            )
        rows.append(row)

    summary = {
        "dataset": {"n": data.n, "p": data.p, "family": fam.name,
                    "source": data.meta.get("source", "generated"),
                    "generator": data.meta.get("generator")},
        "seed": cfg.seed,
        "reference_method": ref_method,
        "best_objective": best,
        "rows": rows,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    (out / "summary.txt").write_text(format_summary(rows), encoding="utf-8")
    _write_curves(out / "curves.csv", traces, best, ref_beta)
    return BenchReport(rows, traces, ref_method, ref_beta, best, out)


def format_summary(rows) -> str:
    head = ["Method", "Rep", "Elapsed(sec)", "Iter", "Tol", "Terminated", "Final objective"]
    body = []
    for r in rows:
        body.append([
            r["method"], str(r["repetition"]),
            "-" if r["elapsed_sec"] is None else f"{r['elapsed_sec']:.3f}",
            "-" if r["iterations"] is None else str(r["iterations"]),
            f"{r['tolerance']:.0e}", r["terminated"],
            "-" if r["final_objective"] is None else f"{r['final_objective']:.12g}",
        ])
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(head), line(["-" * w for w in widths])] + [line(b) for b in body]
    return "\n".join(out) + "\n"


def _write_curves(path, traces, best, ref_beta):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "repetition", "t", "time_seconds", "objective",
                    "log10_gap", "error_to_reference"])
        for (m, rep), tr in traces.items():
            if tr is None:
                continue
            clock = 0.0
            for i, r in enumerate(tr.records):
                clock += r.elapsed_seconds
                gap = r.objective - best + GAP_FLOOR
                lg = math.log10(gap) if gap > 0 else float("nan")
                err = ""
                if tr.iterates is not None and ref_beta is not None:
                    err = _fmt(np.linalg.norm(tr.iterates[i] - ref_beta))
                w.writerow([m, rep, r.t, _fmt(clock), _fmt(r.objective), _fmt(lg), err])
