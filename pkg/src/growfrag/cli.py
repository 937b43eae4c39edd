"""Command line entry point.

    growfrag validate|eigen|simulate|entropy|converge --scenario PATH [--out DIR] [--single-thread]

Each subcommand runs its stage and every prerequisite, writes the artifacts
and ``summary.json`` into the output directory and exits 0 iff every stage
contract held.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import _parallel
from .errors import GrowFragError
from .pipeline import STAGES, run_pipeline
from .scenario import load_scenario

logger = logging.getLogger("growfrag")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="growfrag", description="Growth-fragmentation simulator and entropy checks.")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", default=None, help="output directory (default: the scenario's output.dir)")
    p.add_argument("--single-thread", action="store_true", help="deterministic single-threaded mode")
    p.add_argument("--trajectory", default=None, help="saved trajectory.json to reuse for the entropy stage")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.single_thread:
        _parallel.set_single_thread(True)
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, GrowFragError) as exc:
        print(f"growfrag: cannot load scenario: {exc}", file=sys.stderr)
        return 2
    report = run_pipeline(scenario, [args.stage], args.out, args.trajectory)
    for name, res in report.stages.items():
        line = f"{name:9s} {res['status']}"
        if "message" in res:
            line += f": {res['message']}"
        print(line)
    if not report.ok:
        print(f"growfrag: stage '{report.failed_stage}' failed", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
