"""Command-line entry point: ``tomores <command> --config cfg.json --out dir``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigError
from .experiments import run_reconstruct, run_resolution_map, run_sweep, run_validate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

COMMANDS = {
    "reconstruct": (run_reconstruct, "MAP estimate and posterior variance"),
    "resolution-map": (run_resolution_map, "per-node resolution of the MAP estimate"),
    "sweep": (run_sweep, "probe-node resolution against beam count"),
    "validate": (run_validate, "Monte Carlo check of the prior predictive and MAP covariances"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tomores", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=None, help="output directory (default: config 'output')")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg, base_dir = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = args.out if args.out is not None else base_dir / cfg.output
        func(cfg, out, base_dir)
    except ArithmeticError as exc:
        print(f"tomores {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"tomores {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
