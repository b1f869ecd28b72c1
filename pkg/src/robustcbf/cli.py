"""Command-line front end: run, verify, sweep, replay.

Exit codes: 0 pass, 1 invariant failure, 2 solver failure, 3 config error.
Verbosity comes from the RS_LOG environment variable (DEBUG, INFO, WARNING, ...).
"""
import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .config import ConfigError, parse_scenario, resolve_scenario, shipped_scenarios
from .sim import check_invariants, run_scenario
from .traceio import FORMATS, emit_trace, read_trace
from .verification import SUITES, run_suites

EXIT_OK, EXIT_INVARIANT, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3

# short names accepted by ``sweep --grid``
SWEEP_KEYS = {"s": "smooth.s", "s_A": "smooth.s_A", "q": "smooth.q", "q_A": "smooth.q_A",
              "delta": "smooth.delta", "w": "gains.weights"}

log = logging.getLogger("robustcbf")


@dataclass
class RunSummary:
    scenario: str
    seed: int
    dt: float
    status: str
    min_margin: float
    maintained_level: int
    final_consensus_error: float
    arrival_time: float
    min_pair_distance: float
    min_obstacle_clearance: float
    max_active_rows: int
    max_kkt_residual: float
    checkpoints: int
    robustness_ok: bool
    collisions_ok: bool
    consensus_converged: bool
    solver_ok: bool
    passed: bool
    violations: list = field(default_factory=list)
    trace_file: str = ""

    @property
    def exit_code(self):
        if not self.solver_ok:
            return EXIT_SOLVER
        return EXIT_OK if self.passed else EXIT_INVARIANT

    def to_json(self):
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return json.dumps({k: clean(v) for k, v in asdict(self).items()}, indent=2)


def summarize(trace, config, check_every=None, trace_file=""):
    rep = check_invariants(trace, config, check_every)
    bad = rep.violations
    return RunSummary(
        scenario=config.name, seed=config.seed, dt=config.dt, status=trace.status,
        min_margin=rep.min_margin, maintained_level=rep.maintained_level,
        final_consensus_error=rep.final_consensus_error, arrival_time=rep.arrival_time,
        min_pair_distance=rep.min_pair_distance, min_obstacle_clearance=rep.min_obstacle_clearance,
        max_active_rows=rep.max_active_rows, max_kkt_residual=rep.max_kkt_residual,
        checkpoints=rep.checkpoints,
        robustness_ok=not any("robust" in v or "margin" in v for v in bad),
        collisions_ok=not any("distance" in v or "clearance" in v for v in bad),
        consensus_converged=rep.consensus_converged,
        solver_ok=trace.status == "ok",
        passed=rep.passed, violations=list(bad), trace_file=trace_file,
    )


def setup_logging():
    level = os.environ.get("RS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _overrides(args):
    return dict(seed=args.seed, dt=args.dt, compose_mode=args.compose_mode)


def _run_one(job):
    """Worker: load, simulate, write trace and summary. Returns (summary dict or None, exit code, message)."""
    path, out, fmt, overrides, check_every, tag = job
    setup_logging()
    try:
        config = parse_scenario(resolve_scenario(path))
        plain = {k: v for k, v in overrides.items() if k != "grid"}
        config = config.with_overrides(**plain, **overrides.get("grid", {}))
    except ConfigError as err:
        return None, EXIT_CONFIG, f"config error in {path}: {err}"
    trace = run_scenario(config)
    stem = config.name + (f"_{tag}" if tag else "")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / f"{stem}.{fmt}"
    emit_trace(trace, trace_path, fmt)
    summary = summarize(trace, config, check_every, str(trace_path))
    (out / f"{stem}.summary.json").write_text(summary.to_json() + "\n")
    return asdict(summary) | {"_exit": summary.exit_code}, summary.exit_code, ""


def _dispatch(jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _report(results):
    code = EXIT_OK
    for summary, rc, msg in results:
        code = max(code, rc)
        if summary is None:
            print(msg, file=sys.stderr)
            continue
        arrival = summary["arrival_time"]
        print(f"{'PASS' if rc == 0 else 'FAIL'} {summary['scenario']}: "
              f"min_margin={summary['min_margin']:.4g} level={summary['maintained_level']} "
              f"consensus_err={summary['final_consensus_error']:.3g} "
              f"arrival={'none' if arrival is None else f'{arrival:.2f}s'} "
              f"min_dist={summary['min_pair_distance']:.4g} -> {summary['trace_file']}")
        for v in summary["violations"]:
            print(f"    {v}")
    return code


def cmd_run(args):
    scenarios = args.scenario or [str(p) for p in shipped_scenarios()]
    jobs = [(s, args.out, args.format, _overrides(args), args.check_every, "") for s in scenarios]
    return _report(_dispatch(jobs, args.jobs))


def _parse_grid(items):
    axes = {}
    for item in items:
        key, _, vals = item.partition("=")
        if not vals:
            raise ConfigError("--grid", f"expected KEY=V1,V2,... got {item!r}")
        key = SWEEP_KEYS.get(key, key)
        axes[key] = [json.loads(v) for v in vals.split(",")]
    return axes


def cmd_sweep(args):
    try:
        axes = _parse_grid(args.grid)
    except (ConfigError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    keys = list(axes)
    combos = list(itertools.product(*axes.values())) if keys else [()]
    jobs = []
    for scen in args.scenario or [str(p) for p in shipped_scenarios()]:
        for k, combo in enumerate(combos):
            ov = _overrides(args) | {"grid": dict(zip(keys, combo))}
            jobs.append((scen, args.out, args.format, ov, args.check_every, f"sweep{k}"))
    results = _dispatch(jobs, args.jobs)
    code = _report(results)
    table = Path(args.out) / "sweep.csv"
    cols = ["scenario"] + keys + ["passed", "min_margin", "maintained_level", "final_consensus_error",
                                  "arrival_time", "min_pair_distance", "exit_code"]
    with table.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for job, (summary, rc, _) in zip(jobs, results):
            grid = job[3]["grid"]
            if summary is None:
                w.writerow([job[0]] + [grid[k] for k in keys] + [False, "", "", "", "", "", rc])
                continue
            w.writerow([summary["scenario"]] + [grid[k] for k in keys]
                       + [summary[c] for c in cols[1 + len(keys):-1]] + [rc])
    print(f"sweep table -> {table}")
    return code


def cmd_replay(args):
    if not args.scenario or len(args.scenario) != 1:
        print("replay needs exactly one --scenario", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_scenario(resolve_scenario(args.scenario[0])).with_overrides(**_overrides(args))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    trace = read_trace(args.trace)
    summary = summarize(trace, config, args.check_every, str(args.trace))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{config.name}.replay.json").write_text(summary.to_json() + "\n")
    return _report([(asdict(summary), summary.exit_code, "")])


def cmd_verify(args):
    names = args.suite or list(SUITES)
    ok = True
    for res in run_suites(names, seed=args.seed or 0):
        print(res.line())
        ok &= res.passed
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", action="append", metavar="PATH",
                        help="scenario file or shipped scenario name (repeatable; default: all shipped)")
    common.add_argument("--out", default="out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=FORMATS, default="csv", help="trace file format")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--dt", type=float, help="override the integration step")
    common.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    common.add_argument("--check-every", type=int, metavar="N", help="oracle recheck stride in steps")
    common.add_argument("--compose-mode", choices=("rows", "exponential"),
                        help="separate safety rows or one exponentially composed row")

    parser = argparse.ArgumentParser(prog="robustcbf",
                                     description="Robustness-preserving CBF-QP swarm simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="simulate scenarios, write traces and summaries")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", parents=[common], help="run the oracle and property suites")
    p.add_argument("--suite", action="append", choices=list(SUITES))
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("sweep", parents=[common], help="run a parameter grid")
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help=f"axis; KEY is one of {', '.join(SWEEP_KEYS)} or a dotted config field")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("replay", parents=[common], help="recheck invariants on an existing trace")
    p.add_argument("--trace", required=True, help="trace file written by run")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    setup_logging()
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
