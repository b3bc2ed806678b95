"""Command line entry point.

Subcommands: ``run`` (one experiment from a JSON config), ``suite`` (a named
batch with pass/fail summary), ``gen`` (write a synthetic population CSV).
Exit codes: 0 success, 1 configuration error, 2 acceptance failure in suites.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import AuditAllocError, ConfigurationError
from .experiment import ExperimentConfig, population_config_from_dict, run_experiment
from .population import generate_population, save_population
from .suites import SUITES, run_suite


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audit-alloc",
        description="Simulate budget-constrained audit selection on weighted populations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the experiment JSON config")
    run_p.add_argument("--out", required=True, help="output directory for the artifact set")

    suite_p = sub.add_parser("suite", help="run a named suite and report pass/fail")
    suite_p.add_argument("name", help=f"one of {', '.join(SUITES)}")
    suite_p.add_argument("--out", required=True, help="output directory")
    suite_p.add_argument("--seed", type=int, default=0)

    gen_p = sub.add_parser("gen", help="generate a synthetic population CSV")
    gen_p.add_argument("--config", required=True, help="path to a population JSON config")
    gen_p.add_argument("--out", required=True, help="output CSV path")
    return parser


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config is not valid JSON: {e}") from None


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig.from_dict(_load_json(args.config))
            result = run_experiment(config, args.out)
            for warning in result.warnings:
                print(f"warning: {warning}", file=sys.stderr)
            print(f"wrote artifacts to {result.out_dir}")
            return 0
        if args.command == "suite":
            suite = run_suite(args.name, args.out, seed=args.seed)
            for criterion, passed, detail in suite.rows:
                print(f"{'PASS' if passed else 'FAIL'}  {criterion}  [{detail}]")
            return 0 if suite.ok else 2
        config = population_config_from_dict(_load_json(args.config))
        pop = generate_population(config)
        save_population(pop, args.out)
        print(f"wrote {len(pop)} records to {args.out}")
        return 0
    except ConfigurationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except AuditAllocError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
