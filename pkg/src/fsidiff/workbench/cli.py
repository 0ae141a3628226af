"""Command line: ``fsidiff {simulate,benchmark-cylinder,optimize,check-gradients} --config FILE``.

Exit codes: 0 success, 1 gradient check above tolerance, 2 configuration
error, 3 solver failure (non-convergence or a singular system), 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, FsiError, NonConvergence, SingularSystem
from .config import apply_overrides, load_config
from .experiments import run_experiment

MODES = ("simulate", "benchmark-cylinder", "optimize", "check-gradients")

EXIT_OK, EXIT_GRADIENT, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsidiff", description="Differentiable 2D fluid-structure simulations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="experiment configuration (INI)")
        p.add_argument("--output", default=None, help="output directory (default: [output] directory or ./out)")
        p.add_argument("--re", type=float, default=None, help="override the Reynolds number")
        p.add_argument("--steps", type=int, default=None, help="override the number of time steps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        sc = apply_overrides(load_config(args.config), args.re, args.steps)
        out = args.output or sc.output.get("directory") or "out"
        summary = run_experiment(sc, args.mode, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, SingularSystem) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.mode == "check-gradients" and not summary["passed"]:
        print(f"gradient check failed: max relative error {summary['max_relative_error']:.3e}", file=sys.stderr)
        return EXIT_GRADIENT
    print(f"{args.mode}: wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
