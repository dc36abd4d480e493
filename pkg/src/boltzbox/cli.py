"""Command-line front end: run scenarios, validate configs, list names.

Exit codes: 0 when every stage assertion passed, 1 on assertion failure,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
import time

from .pipeline import (ConfigError, UnknownScenarioError, apply_overrides,
                       list_scenarios, parse_config_file, run_named_scenario,
                       stock_config)


def _add_common(p):
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for run.json, CSV "
                   "series and field snapshots")
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="config override, repeatable (e.g. relax.dt=0.01)")


def _collect(args):
    """(scenario name, overrides dict) from config file + CLI flags."""
    scenario = getattr(args, "scenario", None)
    overrides = {}
    if args.config:
        file_scenario, file_vals = parse_config_file(args.config)
        scenario = scenario or file_scenario
        overrides.update(file_vals)
    for item in args.override:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    return scenario or "weakly-inhomogeneous", overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="boltzbox",
        description="staged Boltzmann relaxation scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario", nargs="?",
                       help=f"one of {', '.join(list_scenarios())} "
                       "(default: weakly-inhomogeneous, or the config "
                       "file's 'scenario' entry)")
    _add_common(p_run)

    p_val = sub.add_parser("validate-config",
                           help="check a config file without running")
    _add_common(p_val)

    sub.add_parser("list-scenarios", help="print known scenario names")

    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name in list_scenarios():
            print(name)
        return 0

    try:
        scenario, overrides = _collect(args)
        if args.command == "validate-config":
            cfg = apply_overrides(stock_config(scenario), overrides)
            print(f"config OK: scenario {scenario}, "
                  f"fingerprint {cfg.fingerprint()}")
            return 0
        t0 = time.time()
        report = run_named_scenario(scenario, overrides, seed=args.seed)
        for line in report.summary_lines():
            print(line)
        print(f"wall time {time.time() - t0:.1f} s")
        if args.out:
            report.write(args.out)
            print(f"wrote {args.out}/run.json")
        return 0 if report.passed else 1
    except (ConfigError, UnknownScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
