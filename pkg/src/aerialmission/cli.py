"""Command line: run, sweep, plot, validate and dot.

Exit codes: 0 success, 1 mission failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import BUILDERS, RunAborted, RunRecord, export_plots, monte_carlo, run_scenario
from .rng import Streams
from .scenario import MISSIONS, ScenarioError, bundled_scenarios, load_scenario, scenario_hash

EXIT_OK, EXIT_MISSION, EXIT_CONFIG = 0, 1, 2


def _scenario_path(text: str) -> str:
    """A file path, or the name of a bundled scenario."""
    if os.path.exists(text):
        return text
    bundled = bundled_scenarios()
    if text in bundled:
        return bundled[text]
    raise ScenarioError("$", f"no scenario file or bundled scenario named {text!r}")


def _load(args):
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return load_scenario(_scenario_path(args.scenario), overrides)


def parse_seeds(text: str) -> list:
    """``0:100`` (half-open range) or ``1,5,9``."""
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b)))
    return [int(s) for s in text.split(",") if s.strip()]


def parse_grid(items) -> dict:
    """``key=v1,v2`` or ``key=[json list]`` per item."""
    grid = {}
    for item in items or []:
        if "=" not in item:
            raise ScenarioError("$", f"grid entry {item!r} is not key=values")
        key, raw = item.split("=", 1)
        if raw.startswith("["):
            values = json.loads(raw)
        else:
            values = []
            for v in raw.split(","):
                try:
                    values.append(json.loads(v))
                except json.JSONDecodeError:
                    values.append(v)
        grid[key] = values
    return grid


def _print_record(rec: RunRecord):
    print(f"{rec.name} seed={rec.seed} outcome={rec.outcome} deployment={rec.deployment_phase} t_end={rec.final_time:.2f}")
    for name, (k, n) in rec.tallies.items():
        print(f"  {name}: {k}/{n}")


def cmd_run(args) -> int:
    sc = _load(args)
    rec = run_scenario(sc, args.out)
    _print_record(rec)
    return rec.exit_code


def cmd_sweep(args) -> int:
    sc = _load(args)
    report = monte_carlo(sc, parse_seeds(args.seeds), parse_grid(args.grid), workers=args.workers)
    for c in report.cells:
        lo, hi = c["wilson95"]
        cell = " ".join(f"{k}={json.dumps(v)}" for k, v in c["overrides"].items()) or "base"
        print(f"{cell}: {c['successes']}/{c['runs']} rate={c['rate']:.3f} wilson95=[{lo:.3f}, {hi:.3f}] errors={c['errors']}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{sc['name']}_sweep.json"), "w") as fh:
            fh.write(report.to_json())
        with open(os.path.join(args.out, f"{sc['name']}_sweep_timing.json"), "w") as fh:
            fh.write(json.dumps(report.timing, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    if args.record:
        rec = RunRecord.load(args.record)
    elif args.scenario:
        out = args.out or "."
        rec = run_scenario(_load(args), out)
    else:
        raise ScenarioError("$", "plot needs --record or --scenario")
    for path in export_plots(rec, args.out).values():
        print(path)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _load(args)
    print(f"ok {sc['name']} {sc['mission']} {scenario_hash(sc)}")
    return EXIT_OK


def cmd_dot(args) -> int:
    name = next(n for n, p in bundled_scenarios().items() if load_scenario(p)["mission"] == args.mission)
    sc = load_scenario(bundled_scenarios()[name])
    print(BUILDERS[args.mission](sc, Streams(0)).machine.to_dot())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aerialmission", description="Deterministic UAV mission simulator harness")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_flags(sp, seed=True):
        sp.add_argument("--scenario", required=sp.prog.split()[-1] != "plot", help="scenario JSON path or bundled scenario name")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed (overrides the scenario)")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE", help="dotted-path override, value parsed as JSON")

    sp = sub.add_parser("run", help="run one scenario")
    scenario_flags(sp)
    sp.add_argument("--out", help="artifact directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="Monte Carlo sweep over seeds and an override grid")
    scenario_flags(sp, seed=False)
    sp.add_argument("--seeds", default="0:10", help="a:b range or comma list")
    sp.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="grid axis")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", help="report directory")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("plot", help="trajectory, altitude and detection-trace CSV/SVG")
    scenario_flags(sp)
    sp.add_argument("--record", help="a *_record.json written by run")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("validate", help="schema-check a scenario")
    scenario_flags(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("dot", help="print a mission state machine in Graphviz DOT")
    sp.add_argument("--mission", choices=MISSIONS, required=True)
    sp.set_defaults(func=cmd_dot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_MISSION


if __name__ == "__main__":
    sys.exit(main())
