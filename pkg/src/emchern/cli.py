"""Command line entry point: ``emchern run <config.json>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import parse_config
from .errors import EmchernError
from .pipeline import run_pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emchern", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the pipelines listed in a JSON config")
    run.add_argument("config", help="path to the JSON config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--threads", type=int, help="worker threads for per-k solves")
    run.add_argument("--mode", choices=("consistent", "independent"),
                     help="wave-operator discretization (overrides the config)")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_config(args.config)
        if args.threads is not None or args.mode is not None:
            spec = spec.with_overrides(threads=args.threads, mode=args.mode)
        status, checks = run_pipeline(spec, args.out)
    except EmchernError as exc:
        print(json.dumps(exc.diagnostic()), file=sys.stderr)
        return 2
    except ValueError as exc:
        print(json.dumps({"error": "ValueError", "message": str(exc)}), file=sys.stderr)
        return 2
    for name, c in checks.items():
        if not c["passed"]:
            print(json.dumps({"error": "CheckFailed", "check": name, **c}), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
