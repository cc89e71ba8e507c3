"""Command-line entry point: ``adepinn <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

from .exceptions import ConfigError, MissingDependencyError
from .experiments import COMMAND_PRESETS, PRESETS, load_config, run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adepinn",
        description="Reference solvers and physics-informed networks for plume transport.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, preset in COMMAND_PRESETS.items():
        p = sub.add_parser(name, help=f"run {name} (default preset: {preset})")
        p.add_argument("--config", help="YAML file overriding the preset")
        p.add_argument("--preset", default=preset, choices=sorted(PRESETS),
                       help="named configuration to start from")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", default="runs", help="run directory (default: runs)")
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded BLAS for bit-identical reruns")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.preset, args.config, args.seed)
        result = run(args.command, cfg, args.out, deterministic=args.deterministic)
    except (ConfigError, MissingDependencyError) as exc:
        print(f"adepinn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    summaries = result if isinstance(result, list) else [result]
    for summary in summaries:
        for key, value in summary.items():
            print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
