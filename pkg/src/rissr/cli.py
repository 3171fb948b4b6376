"""Command line entry point.

``rissr run --config FILE --out DIR [--seed U64] [--threads K]`` runs one
experiment; ``rissr defaults --name EXPERIMENT`` prints a template config.
Exit codes: 0 success, 2 config error, 3 infeasible subproblem,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import EXPERIMENTS, ConfigError, ExperimentSpec, defaults_for, dump_config, load_config
from .experiments import NumericalFailure, execute
from .optimizer import InfeasibleError

__all__ = ["EXIT_OK", "EXIT_CONFIG", "EXIT_INFEASIBLE", "EXIT_NUMERICAL", "run", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def run(spec: ExperimentSpec, out_dir, threads: Optional[int] = None) -> int:
    """Run ``spec`` into ``out_dir`` and return the exit status."""
    try:
        execute(spec, out_dir, threads)
    except InfeasibleError as exc:
        print(f"error: infeasible subproblem: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, FloatingPointError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rissr", description="RIS symbiotic radio experiments")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("--config", required=True, help="key = value config file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--threads", type=int, default=None, help="worker processes")
    d = sub.add_parser("defaults", help="print a template config")
    d.add_argument("--name", required=True, choices=EXPERIMENTS)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(dump_config(defaults_for(args.name)))
        return EXIT_OK
    try:
        spec = load_config(args.config)
        if args.seed is not None:
            spec = spec.replace(seed=args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(spec, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
