"""Command-line front end: ``run``, ``flow``, ``escape``, ``diagnose`` and ``sweep``.

Exit codes: 0 on success, 2 on a solver error, 3 on a configuration error.
Errors are written to stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import classify, complementarity_check, perturb
from .errors import BarrierFlowError, ConfigError, UnknownProblem
from .flow import FlowConfig, escape_experiment, integrate
from .kernels import as_point, make_kernel
from .oracles import Problem, problem_from_dict, registry_get
from .solvers import SolverConfig, StepSchedule, run

TRACE_SCHEMA = "barrierflow-trace/1"
FLOW_SCHEMA = "barrierflow-flow/1"
EXITS_SCHEMA = "barrierflow-exits/1"
EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3


def fmt(v) -> str:
    return "%.17g" % v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def content_hash(problem: Problem) -> str:
    blob = json.dumps(_jsonable(problem.content()), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def parse_vector(text: str | None):
    if text is None:
        return None
    try:
        return np.array([float(t) for t in str(text).split(",") if t.strip()])
    except ValueError:
        raise ConfigError(f"cannot parse vector {text!r}") from None


def load_problem(name: str, problem_file: str | None = None) -> Problem:
    if problem_file:
        try:
            spec = json.loads(Path(problem_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read problem file: {exc}") from None
        return problem_from_dict(spec)
    return registry_get(name)


def out_dir(args) -> Path:
    root = args.out or os.environ.get("BARRIERFLOW_OUT") or "barrierflow-out"
    p = Path(root)
    p.mkdir(parents=True, exist_ok=True)
    return p


def manifest(args, problem: Problem, seed, started: float, paths) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return {
        "tool": "barrierflow",
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "problem_hash": content_hash(problem),
        "seed": seed,
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "artifacts": sorted(paths),
    }


# -- trace serialization ----------------------------------------------------------------

def trace_csv(trace, n: int) -> str:
    cols = ["k"] + [f"x{i}" for i in range(n)] + ["f", "eta", "stable_res", "kkt_res", "gauge"]
    buf = io.StringIO()
    buf.write(f"# {TRACE_SCHEMA} columns={','.join(cols)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in trace.records:
        w.writerow([r.k] + [fmt(v) for v in r.x] + [fmt(r.f), fmt(r.eta), fmt(r.stable_res),
                                                    fmt(r.kkt_res), fmt(r.gauge)])
    return buf.getvalue()


def read_trace_csv(path) -> tuple[str, list[dict]]:
    """Parse a trace file; returns the schema tag and rows as float dicts."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ConfigError("trace file lacks the schema header")
    header = lines[0][2:].split()
    schema = header[0]
    rows = list(csv.DictReader(lines[1:]))
    cols = header[1].split("=", 1)[1].split(",")
    if rows and list(rows[0].keys()) != cols:
        raise ConfigError("trace columns do not match the header")
    return schema, [{k: float(v) for k, v in r.items()} for r in rows]


# -- commands --------------------------------------------------------------------

def _run_cell(problem: Problem, params: dict, outdir: Path) -> dict:
    """Run one solver configuration and write trace.csv and summary.json."""
    if params.get("alpha") is None:
        sched = StepSchedule.constant(params["eta0"])
    else:
        sched = StepSchedule.polynomial(params["eta0"], params["alpha"])
    cfg = SolverConfig(schedule=sched, max_iters=params["iters"], noise=params["noise"],
                       scheme=params["scheme"], stop_tol=params["stop_tol"],
                       seed=params["seed"], record_every=params["record_every"],
                       tau_s=params["tau_s"], tau_k=params["tau_k"])
    x0 = params.get("x0")
    trace = run(problem, cfg, params.get("kernel"), x0=None if x0 is None else np.asarray(x0))
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "trace.csv").write_text(trace_csv(trace, problem.n))
    rep = trace.report
    summary = {
        "classification": rep.classification,
        "report": rep.to_dict(),
        "config": params,
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
        "halvings": trace.halvings,
        "final_x": trace.final,
        "wall_time": trace.wall_time,
    }
    write_json(outdir / "summary.json", summary)
    return summary


def _run_params(args) -> dict:
    return {
        "scheme": args.scheme, "eta0": args.eta0, "alpha": args.alpha, "iters": args.iters,
        "noise": args.noise, "seed": args.seed, "stop_tol": args.stop_tol,
        "record_every": args.record_every, "tau_s": args.tau_s, "tau_k": args.tau_k,
        "kernel": args.kernel,
        "x0": None if args.x0 is None else parse_vector(args.x0).tolist(),
    }


def cmd_run(args) -> int:
    started = time.time()
    problem = load_problem(args.problem, args.problem_file)
    out = out_dir(args)
    summary = _run_cell(problem, _run_params(args), out)
    write_json(out / "manifest.json",
               manifest(args, problem, args.seed, started, ["trace.csv", "summary.json"]))
    print(json.dumps({"classification": summary["classification"], "out": str(out)}))
    return EXIT_OK


def cmd_flow(args) -> int:
    started = time.time()
    problem = load_problem(args.problem, args.problem_file)
    kernel = make_kernel(args.kernel or problem.kernel)
    x0 = parse_vector(args.x0)
    cfg = FlowConfig(h=args.h, t_max=args.tmax, interior_safety=args.safety,
                     record_dt=args.record_dt)
    tr = integrate(problem, kernel, x0, cfg)
    out = out_dir(args)
    n = problem.n
    cols = ["t"] + [f"x{i}" for i in range(n)] + ["f", "stable_res"]
    with open(out / "flow.csv", "w", newline="") as fh:
        fh.write(f"# {FLOW_SCHEMA} columns={','.join(cols)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t, x, f, r in zip(tr.t, tr.x, tr.f, tr.stable_res):
            w.writerow([fmt(t)] + [fmt(v) for v in x] + [fmt(f), fmt(r)])
    rep = classify(problem, kernel, tr.final)
    write_json(out / "summary.json", {"final_x": tr.final, "final_stable_residual":
                                      tr.final_stable_residual, "report": rep.to_dict(),
                                      "capped_steps": tr.capped_steps})
    write_json(out / "manifest.json",
               manifest(args, problem, None, started, ["flow.csv", "summary.json"]))
    print(json.dumps({"final_x": tr.final.tolist(), "out": str(out)}))
    return EXIT_OK


def cmd_escape(args) -> int:
    started = time.time()
    problem = load_problem(args.problem, args.problem_file)
    kernel = make_kernel(args.kernel or problem.kernel)
    xbar = parse_vector(args.xbar)
    deltas = parse_vector(args.deltas)
    if deltas is None or deltas.size == 0:
        raise ConfigError("no deltas given")
    cfg = FlowConfig(h=args.h, t_max=args.tmax, interior_safety=args.safety)
    table = escape_experiment(problem, kernel, xbar, args.eps, deltas, cfg)
    out = out_dir(args)
    cols = ["delta", "t_exit", "reentries", "min_dist_after_exit"]
    with open(out / "exits.csv", "w", newline="") as fh:
        fh.write(f"# {EXITS_SCHEMA} columns={','.join(cols)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in table:
            w.writerow([fmt(r.delta), fmt(r.t_exit), r.reentries, fmt(r.min_dist_after_exit)])
    write_json(out / "manifest.json", manifest(args, problem, None, started, ["exits.csv"]))
    print(json.dumps({"t_exit": [r.t_exit for r in table], "out": str(out)}))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    started = time.time()
    problem = load_problem(args.problem, args.problem_file)
    kernel = make_kernel(args.kernel or problem.kernel)
    x = as_point(parse_vector(args.x))
    if x.size != problem.n:
        raise ConfigError(f"point has length {x.size}, problem has dimension {problem.n}")
    target = problem
    extra = {}
    if args.perturb:
        pp = perturb(problem, kernel, args.perturb, args.seed)
        target = pp.as_problem()
        extra = {"u": pp.u, "v": pp.v}
    rep = classify(target, kernel, x, args.tau_s, args.tau_k)
    body = rep.to_dict()
    body.update(extra)
    if target.region.kind == "orthant":
        body["complementarity"] = complementarity_check(rep)
    out = out_dir(args)
    write_json(out / "report.json", body)
    write_json(out / "manifest.json",
               manifest(args, problem, args.seed, started, ["report.json"]))
    print(json.dumps({"classification": rep.classification, "out": str(out)}))
    return EXIT_OK


def cell_seed(base: int, index: int) -> int:
    """Seed splitting: base seed XOR a hash of the cell index."""
    h = int.from_bytes(hashlib.sha256(f"cell:{index}".encode()).digest()[:4], "little")
    return (int(base) ^ h) & 0x7FFFFFFF


def _sweep_worker(job):
    name, problem_file, params, outdir = job
    problem = load_problem(name, problem_file)
    s = _run_cell(problem, params, Path(outdir))
    return s["classification"], s["iterations"]


def cmd_sweep(args) -> int:
    started = time.time()
    problem = load_problem(args.problem, args.problem_file)
    etas = parse_vector(args.eta0s)
    alphas = [None] if not args.alphas else [None if a in ("none", "") else float(a)
                                             for a in args.alphas.split(",")]
    noises = parse_vector(args.noises)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()] if args.seeds else []
    grid = list(itertools.product(etas if etas is not None else [], alphas,
                                  noises if noises is not None else [], seeds))
    if not grid:
        raise ConfigError("sweep grid is empty")
    out = out_dir(args)
    base = _run_params(args)
    jobs, rows = [], []
    for i, (eta, alpha, noise, seed) in enumerate(grid):
        params = dict(base, eta0=float(eta), alpha=alpha, noise=float(noise),
                      seed=cell_seed(seed, i))
        cell = out / f"cell_{i:04d}"
        jobs.append((args.problem, args.problem_file, params, str(cell)))
        rows.append([i, cell.name, fmt(eta), "" if alpha is None else fmt(alpha), fmt(noise),
                     seed, params["seed"]])
    workers = args.jobs or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "dir", "eta0", "alpha", "noise", "seed", "cell_seed",
                    "classification", "iterations"])
        for row, (label, iters) in zip(rows, results):
            w.writerow(row + [label, iters])
    write_json(out / "manifest.json", manifest(args, problem, args.seed, started, ["index.csv"]))
    print(json.dumps({"cells": len(grid), "out": str(out)}))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _common(p, with_problem=True):
    if with_problem:
        p.add_argument("--problem", default="lin-simplex")
        p.add_argument("--problem-file", default=None, help="JSON problem specification")
    p.add_argument("--kernel", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="JSON file of defaults; flags override it")


def _solver_flags(p):
    p.add_argument("--scheme", default="rhb", choices=["rhb", "mirror"])
    p.add_argument("--eta0", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stop-tol", type=float, default=1e-10)
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--x0", default=None)
    p.add_argument("--tau-s", type=float, default=1e-7)
    p.add_argument("--tau-k", type=float, default=1e-5)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="barrierflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="iterate a discrete scheme")
    _common(p)
    _solver_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("flow", help="integrate the continuous flow")
    _common(p)
    p.add_argument("--x0", default=None)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--safety", type=float, default=0.5)
    p.add_argument("--record-dt", type=float, default=None)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("escape", help="exit times from a spurious point")
    _common(p)
    p.add_argument("--xbar", required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--deltas", required=True)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--tmax", type=float, default=50.0)
    p.add_argument("--safety", type=float, default=0.5)
    p.set_defaults(func=cmd_escape)

    p = sub.add_parser("diagnose", help="classify a point")
    _common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--perturb", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau-s", type=float, default=1e-7)
    p.add_argument("--tau-k", type=float, default=1e-5)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="grid of solver runs")
    _common(p)
    _solver_flags(p)
    p.add_argument("--eta0s", default="0.05")
    p.add_argument("--alphas", default="")
    p.add_argument("--noises", default="0")
    p.add_argument("--seeds", default="0")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return ap


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def parse_args(argv):
    ap = build_parser()
    ap.__class__ = _Parser
    for action in ap._subparsers._group_actions:
        for sp in action.choices.values():
            sp.__class__ = _Parser
    args = ap.parse_args(argv)
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        sp = ap._subparsers._group_actions[0].choices[args.command]
        defaults = {a.dest: a.default for a in sp._actions}
        explicit = set()
        for tok in argv:
            if tok.startswith("--"):
                explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
        for key, val in conf.items():
            dest = key.replace("-", "_")
            if dest not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            if dest not in explicit:
                setattr(args, dest, val)
    return args


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return args.func(args)
    except _ArgumentError as exc:
        return _fail(EXIT_CONFIG, "usage", str(exc))
    except (ConfigError, UnknownProblem) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc).strip("'\""))
    except BarrierFlowError as exc:
        return _fail(EXIT_SOLVER, type(exc).__name__, str(exc))
    except (ValueError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_SOLVER, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
