"""Command-line entry point: ``nonlocal-euler <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .experiments import EXIT_USAGE, WORKERS_ENV, ExperimentError, run_experiment

COMMANDS = {
    "validate-kernel": "check kernel hypotheses and report mass, beta, gamma",
    "classify": "threshold verdict for the initial data, without simulating",
    "simulate": "run the solver with bound diagnostics and blow-up detection",
    "characteristics": "simulate, then integrate particle paths and the Riccati variable",
    "epsilon-sweep": "compare rescaled runs against the local limit system",
    "picard": "fixed-point iteration on a short horizon with contraction ratios",
    "convergence": "self-convergence study over a list of grids",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="nonlocal-euler",
        description="Numerical experiments for a 1D nonlocal Euler system with relaxation.",
        epilog=f"Set {WORKERS_ENV} to fan sweeps and convergence studies out over processes.")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True,
                                parser_class=_Parser)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: the config's output_dir)")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(text, experiment=args.command)
    except ConfigError as exc:
        print(f"error: invalid config {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or (Path(cfg.output_dir) if cfg.output_dir else None)
    if out is None:
        print("error: no output directory (pass --out or set output_dir)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run_experiment(cfg, out, quiet=args.quiet)
    except (ExperimentError, ValueError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {args.command}: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
