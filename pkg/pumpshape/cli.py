# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: command line interface"""
import argparse
import json
import logging as log
import sys

from .config import list_scenarios, validate_config
from .errors import PumpshapeError
from .plotgen import emit_plot_script
from .runner import RunManifest, run_scenario, with_seed


def error_line(e: BaseException) -> str:
    """Machine-readable failure line for stderr."""
    cause = e.__cause__
    info = {
        "type": type(e).__name__,
        "message": str(e),
        "key": getattr(e, "key", None) or getattr(cause, "key", None),
        "scenario_id": getattr(e, "scenario_id", None),
        "task": getattr(e, "task", None),
    }
    return "error: " + json.dumps(info, sort_keys=True)


def _jobs(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--jobs must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pumpshape", description="Run pump-shaping simulation scenarios")
    parser.add_argument("--list-scenarios", action="store_true", help="List scenario ids and exit")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="Run one scenario config")
    run.add_argument("config", nargs="?", help="YAML scenario config file")
    run.add_argument("--seed", type=int, help="Override the config's master seed")
    run.add_argument("--out", "-o", help="Output directory", action="store")
    run.add_argument("--jobs", "-j", type=_jobs, default=1, help="Worker threads")
    run.add_argument(
        "--list-scenarios", action="store_true", default=argparse.SUPPRESS, help="List scenario ids and exit"
    )

    plot = sub.add_parser("plot", help="Regenerate the plot script of a finished run")
    plot.add_argument("manifest", help="Path to manifest.json")
    return parser


def main(argv=None) -> int:
    """Command line entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    log.basicConfig(level=log.DEBUG if args.verbose else log.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.list_scenarios:
        for scenario_id in list_scenarios():
            print(scenario_id)
        return 0

    try:
        if args.command == "run":
            if not args.config:
                parser.error("run needs a config file")
            with open(args.config, "r", encoding="utf8") as f:
                cfg = with_seed(validate_config(f.read()), args.seed)
            manifest = run_scenario(cfg, out_dir=args.out, jobs=args.jobs)
            print(manifest.path("manifest.json"))
        elif args.command == "plot":
            print(emit_plot_script(RunManifest.load(args.manifest)))
        else:
            parser.print_usage(sys.stderr)
            return 2
    except (PumpshapeError, OSError, ValueError) as e:
        log.debug("command failed", exc_info=True)
        print(error_line(e), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
