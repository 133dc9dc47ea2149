"""``confexec`` command line: run scenarios, evaluate the analytical bounds and
sweep parameters.

Exit codes: 0 success, 1 invariant violation, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import mean
from typing import Optional

from . import analysis, scenario as scenario_mod
from .scenario import ScenarioError
from .selection import SelectionError
from .storage import ParameterError

log = logging.getLogger("confexec")

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2
DEFAULT_BUDGET = 2_000_000  # simulated node-blocks per sweep

PARAM_ALIASES = {
    "n": "nodes", "c": "committee", "s": "rsts_s", "t": "rsts_t",
    "window": "transition_window", "interval": "block_interval",
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# run


def _load(name: str) -> scenario_mod.Scenario:
    try:
        path = scenario_mod.resolve(name)
    except FileNotFoundError:
        raise UsageError(f"no such scenario file or bundled scenario: {name}") from None
    return scenario_mod.load(path)


def summary(report: dict) -> dict:
    reqs = report["requests"]
    lat = [r["latency"] for r in reqs if r["latency"] is not None]
    return {
        "scenario": report["scenario"],
        "seed": report["seed"],
        "requests": len(reqs),
        "answered": len(lat),
        "latency_blocks": sorted(set(lat)),
        "publishes_accepted": sum(1 for p in report["publishes"] if p["accepted"]),
        "publishes_rejected": sum(1 for p in report["publishes"] if not p["accepted"]),
        "availability_gaps": report["availability_gaps"],
        "final_state_digest": report["audit"]["final_state_digest"],
        "invariant_violations": report["invariant_violations"],
    }


def cmd_run(args) -> int:
    from .sim import Simulation, requests_csv

    sc = _load(args.scenario)
    sim = Simulation(sc, args.seed)
    report = sim.run()
    if args.out:
        sim.write_outputs(report, args.out)
    if args.format == "csv":
        sys.stdout.write(requests_csv(report))
    else:
        print(json.dumps(summary(report), indent=1))
    for v in report["invariant_violations"]:
        log.warning("violation: %s", v)
    if args.verbose:
        for e in report["events"]:
            log.info("event %s", e)
    return EXIT_VIOLATION if report["invariant_violations"] else EXIT_OK


# --------------------------------------------------------------------------
# analyze


def cmd_analyze(args) -> int:
    if args.what == "rsts":
        rows = analysis.rsts_sweep([(args.n, args.m, args.s, args.t)])
        if args.format == "csv":
            sys.stdout.write(analysis.sweep_csv(rows, flag=True))
        else:
            r = rows[0]
            print(json.dumps({
                **r.as_dict(),
                "epsilon": float(r.epsilon),
                "below_1e-12": r.log10 < -12,
            }, indent=1))
        return EXIT_OK
    q = analysis.LivenessQuery(args.n, args.c, args.t, args.honest)
    q.check()
    delta = analysis.liveness_delta(q.n, q.c, q.t_rounds)
    out = {"n": q.n, "c": q.c, "t": q.t_rounds, "delta": float(delta),
           "delta_exact": f"{delta.numerator}/{delta.denominator}"}
    if args.trials:
        est = analysis.liveness_montecarlo(q, args.trials, args.seed)
        out.update({"montecarlo": est.p, "stderr": est.se, "trials": est.trials, "honest": q.honest})
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(list(out))
        w.writerow(list(out.values()))
    else:
        print(json.dumps(out, indent=1))
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep


def parse_param(text: str) -> tuple[str, list]:
    """``c=1..10``, ``dropout=0.1,0.3`` or ``n=8``."""
    if "=" not in text:
        raise UsageError(f"bad --param {text!r}, expected name=values")
    name, grid = text.split("=", 1)
    name = PARAM_ALIASES.get(name.strip(), name.strip())
    if not hasattr(scenario_mod.Scenario("x", 1, 1, 2), name):
        raise UsageError(f"unknown scenario parameter {name!r}")
    values: list = []
    for part in grid.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(float(part) if "." in part else int(part))
    if not values:
        raise UsageError(f"empty grid for {name}")
    return name, values


def _cell(job) -> dict:
    from .sim import Simulation

    sc, changes, seed = job
    cell = sc.replace(**changes)
    report = Simulation(cell, seed).run()
    lat = [r["latency"] for r in report["requests"] if r["latency"] is not None]
    pubs = report["publishes"]
    return {
        **changes,
        "seed": seed,
        "ratio": cell.committee / cell.nodes,
        "gaps": len(report["availability_gaps"]),
        "redundant": sum(1 for p in pubs if not p["accepted"]),
        "latency": mean(lat) if lat else None,
        "unanswered": len(report["requests"]) - len(lat),
        "violations": len(report["invariant_violations"]),
    }


def run_sweep(sc, grid: dict[str, list], trials: int, seed: int = 0, workers: int = 1) -> list[dict]:
    names = list(grid)
    jobs = []
    for combo in itertools.product(*(grid[n] for n in names)):
        changes = dict(zip(names, combo))
        for k in range(trials):
            jobs.append((sc, changes, seed + k))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_cell, jobs))
    return [_cell(j) for j in jobs]


def aggregate(rows: list[dict], names: list[str]) -> list[dict]:
    out: dict[tuple, list[dict]] = {}
    for r in rows:
        out.setdefault(tuple(r[n] for n in names), []).append(r)
    agg = []
    for key, group in out.items():
        lat = [r["latency"] for r in group if r["latency"] is not None]
        agg.append({
            **dict(zip(names, key)),
            "ratio": group[0]["ratio"],
            "trials": len(group),
            "availability_gaps": mean(r["gaps"] for r in group),
            "redundant_publishes": mean(r["redundant"] for r in group),
            "first_response_latency": mean(lat) if lat else "",
            "unanswered": sum(r["unanswered"] for r in group),
            "violations": sum(r["violations"] for r in group),
        })
    return agg


def cmd_sweep(args) -> int:
    sc = _load(args.scenario)
    grid = dict(parse_param(p) for p in args.param)
    if not 1 <= len(grid) <= 2:
        raise UsageError("sweep takes one or two --param grids")
    cells = 1
    for v in grid.values():
        cells *= len(v)
    nodes = max([sc.nodes] + grid.get("nodes", []))
    blocks = max([sc.blocks] + grid.get("blocks", []))
    cost = cells * args.trials * nodes * blocks
    if cost > args.budget:
        raise UsageError(
            f"sweep needs about {cost} node-blocks, over the budget of {args.budget}; "
            "reduce the grid or --trials, or raise --budget"
        )
    rows = run_sweep(sc, grid, args.trials, args.seed, args.workers)
    agg = aggregate(rows, list(grid))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(agg[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(agg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_VIOLATION if any(r["violations"] for r in agg) else EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="confexec", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario")
    r.add_argument("scenario", help="YAML file or bundled scenario name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--verbose", "-v", action="store_true")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="evaluate the analytical probabilities")
    asub = a.add_subparsers(dest="what", required=True)
    ar = asub.add_parser("rsts")
    for f in ("n", "m", "s", "t"):
        ar.add_argument(f"--{f}", type=int, required=True)
    ar.add_argument("--format", choices=("json", "csv"), default="json")
    al = asub.add_parser("liveness")
    for f in ("n", "c", "t"):
        al.add_argument(f"--{f}", type=int, required=True)
    al.add_argument("--honest", type=int, default=1)
    al.add_argument("--trials", type=int, default=0)
    al.add_argument("--seed", type=int, default=0)
    al.add_argument("--format", choices=("json", "csv"), default="json")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    s.add_argument("scenario")
    s.add_argument("--param", action="append", required=True, help="e.g. c=1..10 or dropout=0.1,0.3")
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        for m in exc.messages:
            print(m, file=sys.stderr)
        return EXIT_INPUT
    except (UsageError, ParameterError, SelectionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
