"""Command-line entry point: ``edgecache run|validate|describe|list-scenarios``."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError
from .core import ScenarioRuntimeError, ValidationError, default_out_dir, run_scenario, validate_config
from .scenarios import SCENARIOS

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgecache", description="Wireless edge-caching experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config")
    run.add_argument("--jobs", type=int, default=1, help="parallel replications (default 1)")
    run.add_argument("--out", default=None, help="output directory (default $EDGECACHE_OUT or ./results)")
    run.add_argument("--seed", type=int, default=None, help="override base_seed")

    val = sub.add_parser("validate", help="check a config without simulating")
    val.add_argument("config")

    desc = sub.add_parser("describe", help="show a scenario's parameters, sweep axes and output columns")
    desc.add_argument("scenario")

    sub.add_parser("list-scenarios", help="list known scenarios")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name, scen in SCENARIOS.items():
            print(f"{name}\t{scen.title}")
        return EXIT_OK
    if args.command == "describe":
        scen = SCENARIOS.get(args.scenario)
        if scen is None:
            print(f"unknown scenario {args.scenario!r}", file=sys.stderr)
            return EXIT_VALIDATION
        sys.stdout.write(scen.describe())
        return EXIT_OK
    if args.command == "validate":
        try:
            violations = validate_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        for v in violations:
            print(v, file=sys.stderr)
        if violations:
            return EXIT_VALIDATION
        print("ok")
        return EXIT_OK
    # run
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.out if args.out is not None else default_out_dir()
    try:
        table = run_scenario(args.config, out, args.jobs, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:
        for v in exc.violations:
            print(v, file=sys.stderr)
        return EXIT_VALIDATION
    except ScenarioRuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        if exc.partial_path is not None:
            print(f"partial results kept in {exc.partial_path}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{table.metadata['scenario']}: {len(table.rows)} rows written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
