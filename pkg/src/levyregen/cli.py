"""Command-line entry point.

Exit codes: 0 when the computed verdict matches the declared one, 1 on a
mismatch, 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .decompose import reconcile
from .levy_core import DEFAULT_HORIZON, DEFAULT_STEP, GridError, load_model, simulate
from .scenarios import DEFAULT_OUTPUT, OUTPUT_ENV, ConfigError, dumps, list_scenarios, resolve, run_scenario

EXIT_MATCH, EXIT_MISMATCH, EXIT_CONFIG = 0, 1, 2


def _output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _load_config(source: str, seed: int | None):
    scenario = resolve(source)
    if seed is None:
        return scenario
    cfg = scenario.to_json()
    cfg["seed"] = seed
    return resolve(cfg)


def cmd_run(args) -> int:
    scenario = _load_config(args.scenario, args.seed)
    result = run_scenario(scenario, _output_dir(args.out))
    for report in result.outcome.reports.values():
        for line in report.summary_lines():
            print(line)
    status = "MATCH" if result.matches else "MISMATCH"
    print(f"{scenario.name}: computed={result.computed} expected={scenario.expected} {status}")
    return EXIT_MATCH if result.matches else EXIT_MISMATCH


def cmd_list(args) -> int:
    for s in list_scenarios():
        print(f"{s.name:<22} {s.flow:<20} expected={s.expected:<7} {s.description}")
    return EXIT_MATCH


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    path = simulate(model, args.horizon, args.step, args.seed)
    text = path.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_MATCH


def cmd_reconcile(args) -> int:
    report = reconcile(load_model(args.model_a), load_model(args.model_b))
    sys.stdout.write(dumps(report.to_json()))
    return EXIT_MATCH if report.equivalent_mod_cp_kill else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyregen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file or a built-in scenario by name")
    p.add_argument("scenario")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list-scenarios", help="list built-in scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("simulate", help="simulate one path of a model and write it as CSV")
    p.add_argument("model")
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconcile", help="decide equivalence modulo compound Poisson parts and killing")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.set_defaults(func=cmd_reconcile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GridError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
