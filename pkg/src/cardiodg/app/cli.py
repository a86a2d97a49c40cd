"""Command line: ``cardiodg solve|convergence|check <config> [--out DIR] [--stride N]``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from ..dynamics import IncompatibleForcingError
from ..sparse import SolverError
from .config import ConfigError, parse_config
from .runner import run_convergence, run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cardiodg", description="DG monodomain/bidomain solver")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve", "run a simulation and write VTK snapshots plus summary.csv"),
        ("convergence", "run a manufactured-solution convergence study"),
        ("check", "validate a configuration file without running it"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (overrides run.out)")
        p.add_argument("--stride", type=int, help="snapshot every N steps (overrides run.stride)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config)
        if args.stride is not None:
            config = dataclasses.replace(config, stride=args.stride)
        if args.command == "convergence" and config.scenario != "manufactured":
            raise ConfigError("convergence studies need scenario = manufactured")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "check":
            print(f"{args.config}: ok ({config.model}, {config.scenario}, p={config.p}, "
                  f"sigma={config.sigma}, {config.n_steps} steps)")
        elif args.command == "solve":
            res = run_simulation(config, out_dir=args.out)
            for f in res.files:
                print(f)
        else:
            rows, files = run_convergence(config, out_dir=args.out)
            for f in files:
                print(f)
    except (SolverError, IncompatibleForcingError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
