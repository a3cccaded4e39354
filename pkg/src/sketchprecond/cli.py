"""Command-line benchmark harness.

Subcommands: ``solve``, ``distortion``, ``sketch-bench``, ``embedding-sweep``
and ``scaling``. Settings come from built-in defaults, then ``--config``
(a JSON file), then ``--set key=value`` overrides (dotted keys reach nested
sections, values are parsed as JSON when possible). Every table is written
as ``<name>.csv`` next to a ``<name>.config.json`` sidecar holding the full
resolved config, so rerunning with ``--config <sidecar>`` reproduces the
numeric columns.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .distsim import SparseSignSpec, WorkerPool, dist_sketch_apply, distribute
from .embedding import BASELINE_RATIO, iterations_for, select_embedding_dim
from .exceptions import ConfigError, SketchError
from .kernels import BACKEND
from .metrics import distortion_trials, orthonormal_basis
from .precond import build_preconditioner, initial_guess
from .problems import PROBLEM_KINDS, make_problem, stack_copies
from .sketches import KINDS, SketchParams, apply_sketch, make_sketch, sketch_vector
from .solvers import SOLVERS, GradientParams, gd_step_size, gradient_descent_hbm, hbm_params

log = logging.getLogger("sketchprecond")

OUTPUT_ENV = "SKETCHPRECOND_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

DEFAULTS = {
    "problem": {"kind": "dense", "m": 20000, "n": 200, "cond": 1e3, "density": 0.01,
                "rho": 0.5, "path": None},
    "sketch": {"kind": "sparse_sign", "d": None, "d_ratio": 8, "zeta": 8},
    "solver": "lsqr",
    "eps": 1e-10,
    "maxit": 100,
    "eta_hat": None,
    "trials": 20,
    "seed": 0,
    "workers": 1,
    "output": None,
    # per-command sweeps
    "ratios": [2, 4, 8, 16, 32],
    "zetas": [1, 2, 4, 8, 16],
    "kinds": ["sparse_sign", "gaussian", "trig"],
    "repeats": 3,
    "ps": [1, 2, 4, 8],
    "mode": "strong",
}


# ---------------------------------------------------------------------------
# config handling


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = parse_value(raw)


def merge(base, update, where=""):
    for k, v in update.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where + k!r} must be an object")
            merge(base[k], v, where + k + ".")
        else:
            base[k] = v
    return base


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        data.pop("command", None)
        data.pop("version", None)
        merge(cfg, data)
    for o in overrides:
        apply_override(cfg, o)
    validate_config(cfg)
    return cfg


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(cfg):
    pr, sk = cfg["problem"], cfg["sketch"]
    _need(pr["kind"] in PROBLEM_KINDS, f"problem.kind must be one of {PROBLEM_KINDS}")
    if pr["kind"] == "mtx":
        _need(pr["path"] and Path(pr["path"]).is_file(), "problem.path must name an existing .mtx file")
    else:
        _need(_is_int(pr["m"]) and _is_int(pr["n"]) and pr["m"] > pr["n"] >= 1,
              "problem.m and problem.n must be integers with m > n >= 1")
    _need(pr["cond"] >= 1, "problem.cond must be >= 1")
    _need(0 <= pr["density"] <= 1, "problem.density must lie in [0, 1]")
    _need(0 <= pr["rho"] < 1, "problem.rho must lie in [0, 1)")
    _need(sk["kind"] in KINDS, f"sketch.kind must be one of {KINDS}")
    _need(sk["d"] is None or sk["d"] == "auto" or (_is_int(sk["d"]) and sk["d"] >= 1),
          "sketch.d must be a positive integer, 'auto' or null")
    _need(sk["d_ratio"] > 1, "sketch.d_ratio must exceed 1")
    _need(_is_int(sk["zeta"]) and sk["zeta"] >= 1, "sketch.zeta must be a positive integer")
    _need(cfg["solver"] in SOLVERS, f"solver must be one of {tuple(SOLVERS)}")
    _need(0 <= cfg["eps"] < 1, "eps must lie in [0, 1)")
    _need(_is_int(cfg["maxit"]) and cfg["maxit"] >= 1, "maxit must be a positive integer")
    _need(cfg["eta_hat"] is None or 0 <= cfg["eta_hat"] < 1, "eta_hat must lie in [0, 1)")
    _need(_is_int(cfg["trials"]) and cfg["trials"] >= 1, "trials must be a positive integer")
    _need(_is_int(cfg["seed"]) and cfg["seed"] >= 0, "seed must be a nonnegative integer")
    _need(_is_int(cfg["workers"]) and cfg["workers"] >= 1, "workers must be a positive integer")
    _need(_is_int(cfg["repeats"]) and cfg["repeats"] >= 1, "repeats must be a positive integer")
    _need(all(r > 1 for r in cfg["ratios"]), "ratios must all exceed 1")
    _need(all(_is_int(z) and z >= 1 for z in cfg["zetas"]), "zetas must be positive integers")
    _need(all(k in KINDS for k in cfg["kinds"]), f"kinds must be drawn from {KINDS}")
    _need(all(_is_int(p) and p >= 1 for p in cfg["ps"]), "ps must be positive integers")
    _need(cfg["mode"] in ("strong", "weak"), "mode must be 'strong' or 'weak'")


def output_dir(cfg, cli_value=None):
    out = Path(cli_value or cfg["output"] or os.environ.get(OUTPUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_table(out, name, header, rows, cfg, command):
    """``<name>.csv`` with a header row plus the ``<name>.config.json`` sidecar."""
    path = out / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    write_sidecar(out / f"{name}.config.json", cfg, command)
    log.info("wrote %s", path)
    return path


def write_sidecar(path, cfg, command):
    with open(path, "w") as fh:
        json.dump(dict(cfg, command=command, version=__version__), fh, indent=2)


# ---------------------------------------------------------------------------
# shared pipeline


def resolve_d(cfg, m, n):
    sk = cfg["sketch"]
    if sk["d"] == "auto":
        return select_embedding_dim(m, n, cfg["eps"] or 1e-10).d
    d = sk["d"] if sk["d"] is not None else int(round(sk["d_ratio"] * n))
    if not n <= d <= m:
        raise ConfigError(f"sketch dimension d={d} must lie in [n, m] = [{n}, {m}]")
    return d


def build_problem(cfg, seed=None):
    pr = cfg["problem"]
    return make_problem(pr["kind"], pr["m"], pr["n"], pr["cond"], pr["density"], pr["rho"],
                        cfg["seed"] if seed is None else seed, pr["path"])


def sketch_precondition(A, b, params, workers=1):
    """Sketch, factor, and form the initial guess; returns ``(P, x0, times)``."""
    t0 = time.perf_counter()
    S = make_sketch(params, A.shape[0], workers=workers)
    t1 = time.perf_counter()
    Y = apply_sketch(S, A)
    Sb = sketch_vector(S, b)
    t2 = time.perf_counter()
    P = build_preconditioner(np.asarray(Y))
    x0 = initial_guess(P, Sb)
    t3 = time.perf_counter()
    return P, x0, {"generate": t1 - t0, "apply": t2 - t1, "qr": t3 - t2}


def run_solver(cfg, A, P, b, x0, inst, d, maxit=None, eps=None):
    solver = cfg["solver"]
    eps = cfg["eps"] if eps is None else eps
    maxit = cfg["maxit"] if maxit is None else maxit
    kw = dict(eps=eps, maxit=maxit, x_star=inst.x_star)
    if solver in ("gd", "hbm"):
        eta = cfg["eta_hat"] if cfg["eta_hat"] is not None else math.sqrt(A.shape[1] / d)
        params = hbm_params(eta) if solver == "hbm" else GradientParams(gd_step_size(eta), 0.0, eta)
        return gradient_descent_hbm(A, P, b, x0, params, **kw)
    return SOLVERS[solver](A, P, b, x0, **kw)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg, out):
    inst = build_problem(cfg)
    m, n = inst.shape
    d = resolve_d(cfg, m, n)
    sk = cfg["sketch"]
    params = SketchParams(d, sk["zeta"], sk["kind"], cfg["seed"])
    P, x0, times = sketch_precondition(inst.A, inst.b, params, cfg["workers"])
    with WorkerPool(cfg["workers"]) as pool:
        Ad = distribute(inst.A, pool)
        x, report = run_solver(cfg, Ad, P, inst.b, x0, inst, d)
    summary = report.to_dict()
    summary.update(d=d, m=m, n=n, seed=cfg["seed"], setup_times=times, backend=BACKEND)
    with open(out / "solve_report.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    report.write_csv(out / "solve_iterations.csv")
    write_sidecar(out / "solve_iterations.config.json", cfg, "solve")
    final = report.iterates_error[-1] / report.iterates_error[0] if report.iterates_error[0] else 0.0
    print(f"{report.method}: {report.iterations} iterations, termination={report.termination.value}, "
          f"relative error {final:.3e}")
    return report


def cmd_distortion(cfg, out):
    inst = build_problem(cfg)
    m, n = inst.shape
    U = orthonormal_basis(inst.A)
    kind = cfg["sketch"]["kind"]
    zetas = cfg["zetas"] if kind == "sparse_sign" else [None]
    rows = []
    for ratio in cfg["ratios"]:
        d = int(round(ratio * n))
        if d > m:
            log.warning("skipping d/n=%s: d exceeds m", ratio)
            continue
        for zeta in zetas:
            if zeta is not None and zeta > d:
                continue

            def factory(seed, d=d, zeta=zeta):
                return make_sketch(SketchParams(d, zeta or 8, kind, seed), m)

            rep = distortion_trials(factory, U, cfg["trials"], workers=cfg["workers"], seed0=cfg["seed"])
            q05, q50, q95 = rep.quantiles
            rows.append([ratio, d, zeta if zeta is not None else "", kind, cfg["trials"],
                         repr(q05), repr(q50), repr(q95), repr(math.sqrt(n / d)), cfg["seed"]])
    header = ["d_over_n", "d", "zeta", "kind", "trials", "eta_q05", "eta_q50", "eta_q95",
              "sqrt_n_over_d", "seed"]
    return write_table(out, "distortion", header, rows, cfg, "distortion")


def _best_time(fn, repeats):
    best, result = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def cmd_sketch_bench(cfg, out):
    inst = build_problem(cfg)
    m, n = inst.shape
    rows = []
    for kind in cfg["kinds"]:
        for ratio in cfg["ratios"]:
            d = int(round(ratio * n))
            if d > m:
                continue
            for zeta in (cfg["zetas"] if kind == "sparse_sign" else [None]):
                if zeta is not None and zeta > d:
                    continue
                params = SketchParams(d, zeta or 8, kind, cfg["seed"])
                try:
                    t_gen, S = _best_time(lambda: make_sketch(params, m, cfg["workers"]), cfg["repeats"])
                except SketchError as exc:  # e.g. a Gaussian sketch over the memory cap
                    log.warning("skipping %s d=%d: %s", kind, d, exc)
                    continue
                t_apply, _ = _best_time(lambda: apply_sketch(S, inst.A), cfg["repeats"])
                rows.append([kind, ratio, d, zeta if zeta is not None else "", m, n,
                             t_gen, t_apply, t_gen + t_apply, cfg["seed"]])
    header = ["kind", "d_over_n", "d", "zeta", "m", "n", "generate_s", "apply_s", "total_s", "seed"]
    return write_table(out, "sketch_bench", header, rows, cfg, "sketch-bench")


def cmd_embedding_sweep(cfg, out):
    """Fixed-iteration runs over ``d``: the iteration count is the budget
    ``ceil(log eps / log(n/d))`` and the cost is split into phases."""
    inst = build_problem(cfg)
    m, n = inst.shape
    eps = cfg["eps"] or 1e-10
    sk = cfg["sketch"]
    plans = [("sweep", int(round(r * n))) for r in cfg["ratios"]]
    plans.append(("selected", select_embedding_dim(m, n, eps).d))
    plans.append(("baseline", min(BASELINE_RATIO * n, m)))
    rows = []
    for rule, d in plans:
        if not n < d <= m:
            log.warning("skipping d=%d outside (n, m]", d)
            continue
        params = SketchParams(d, min(sk["zeta"], d), sk["kind"], cfg["seed"])
        P, x0, times = sketch_precondition(inst.A, inst.b, params, cfg["workers"])
        t_iter = iterations_for(eps, n, d)
        t0 = time.perf_counter()
        _, rep = run_solver(cfg, inst.A, P, inst.b, x0, inst, d, maxit=t_iter, eps=0.0)
        t_solve = time.perf_counter() - t0
        err = rep.iterates_error
        rel = err[-1] / err[0] if err[0] else 0.0
        total = times["generate"] + times["apply"] + times["qr"] + t_solve
        rows.append([rule, d, repr(d / n), t_iter, rep.iterations, repr(rel),
                     times["generate"], times["apply"], times["qr"], t_solve, total, cfg["seed"]])
    header = ["rule", "d", "d_over_n", "budget_iterations", "iterations", "relative_error",
              "generate_s", "apply_s", "qr_s", "iterate_s", "total_s", "seed"]
    return write_table(out, "embedding_sweep", header, rows, cfg, "embedding-sweep")


def cmd_scaling(cfg, out):
    """Phase times and synchronization counts against the worker count.

    Strong scaling keeps one problem; weak scaling stacks ``p`` copies of the
    base problem so rows per worker stay fixed. The sketch is never
    assembled: each worker generates its own columns from the seed.
    """
    base = build_problem(cfg)
    n = base.shape[1]
    sk = cfg["sketch"]
    rows = []
    for p in cfg["ps"]:
        inst = stack_copies(base, p) if cfg["mode"] == "weak" else base
        m = inst.shape[0]
        d = resolve_d(cfg, m, n) if cfg["mode"] == "strong" else resolve_d(cfg, base.shape[0], n)
        recipe = SparseSignSpec(d, sk["zeta"], cfg["seed"])
        with WorkerPool(p) as pool:
            Ad = distribute(inst.A, pool)
            bd = Ad.vector(inst.b)
            c0 = pool.counter.snapshot()
            t0 = time.perf_counter()
            Y = dist_sketch_apply(recipe, Ad)
            Sb = dist_sketch_apply(recipe, bd)
            t1 = time.perf_counter()
            P = build_preconditioner(Y)
            x0 = initial_guess(P, Sb)
            t2 = time.perf_counter()
            c1 = pool.counter.snapshot()
            _, rep = run_solver(cfg, Ad, P, inst.b, x0, inst, d)
            t3 = time.perf_counter()
        rel = rep.iterates_error[-1] / rep.iterates_error[0] if rep.iterates_error[0] else 0.0
        rows.append([cfg["mode"], p, m, n, d, t1 - t0, t2 - t1, t3 - t2, t3 - t0,
                     c1[0] - c0[0], rep.setup_reductions + rep.sync_count, rep.iterations,
                     repr(rep.sync_count / max(rep.iterations, 1)), rep.broadcasts, repr(rel), cfg["seed"]])
    header = ["mode", "p", "m", "n", "d", "sketch_s", "qr_s", "solve_s", "total_s",
              "sketch_reductions", "solve_reductions", "iterations", "reductions_per_iteration",
              "broadcasts", "relative_error", "seed"]
    return write_table(out, f"scaling_{cfg['mode']}", header, rows, cfg, "scaling")


COMMANDS = {
    "solve": cmd_solve,
    "distortion": cmd_distortion,
    "sketch-bench": cmd_sketch_bench,
    "embedding-sweep": cmd_embedding_sweep,
    "scaling": cmd_scaling,
}


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


HELP = {
    "solve": "sketch, precondition and solve one problem; writes a SolveReport and per-iteration CSV",
    "distortion": "distortion of sketches over repeated trials",
    "sketch-bench": "time sketch generation and application across sketch kinds",
    "embedding-sweep": "fixed-budget runs over the embedding dimension d",
    "scaling": "phase times and sync counts against the worker count (strong or weak)",
}


def build_parser():
    parser = _Parser(prog="sketchprecond", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sp_ = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp_.add_argument("--config", help="JSON config file")
        sp_.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config entry (repeatable; dotted keys for sections)")
        sp_.add_argument("-o", "--output", help=f"output directory (default: ${OUTPUT_ENV} or ./results)")
        sp_.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        out = output_dir(cfg, args.output)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SketchError, ArithmeticError, ValueError, MemoryError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
