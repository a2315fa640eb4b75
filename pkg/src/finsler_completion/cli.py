"""Command-line entry point: ``finsler-completion run|verify <scenario>``."""

import argparse
import logging
import os
import sys
from pathlib import Path

from .exceptions import ConfigError
from .io import ArtifactWriter, dumps
from .pipeline import run_scenario
from .scenario import bundled_scenarios, load_scenario, resolve
from .verify import run_suites

OUT_ENV = "FINSLER_COMPLETION_OUT"
EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="finsler-completion",
        description="Distance fields, properness tests and completing projective changes for Finsler metrics.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the scenario pipeline and write artifacts"),
                       ("verify", "run the invariant suites and report pass/fail per invariant")):
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario", help="scenario JSON file or name of a bundled scenario")
        p.add_argument("--out", type=Path, default=None,
                       help=f"output directory (default: ${OUT_ENV} or ./finsler-out)")
        p.add_argument("--h", type=float, default=None, help="override the grid spacing")
        p.add_argument("--stencil", type=int, choices=(8, 16, 26), default=None, help="override the stencil")
        p.add_argument("--lipschitz-mode", action="store_true",
                       help="use the candidate function directly, skipping the mollifier")
        p.add_argument("--seed", type=int, default=None, help="seed for sampling-based checks")
    sub.add_parser("list", help="list bundled scenarios")
    return parser


def _out_root(args):
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUT_ENV, "finsler-out"))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list":
        for path in bundled_scenarios():
            print(path.stem)
        return EXIT_OK
    try:
        scenario = load_scenario(resolve(args.scenario))
        scenario = scenario.with_overrides(args.h, args.stencil, args.lipschitz_mode, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_root(args) / scenario.name
    if args.command == "run":
        try:
            ok, summary = run_scenario(scenario, out)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for row in summary:
            print(f"{row['stage']:<12} {'PASS' if row['passed'] else 'FAIL'}")
        print(f"artifacts: {out}")
        return EXIT_OK if ok else EXIT_FAILED
    try:
        ok, results = run_suites(scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    writer = ArtifactWriter(out)
    writer.write_json("verify.json", {"scenario": scenario.name, "passed": ok, "invariants": results}, "verify")
    sys.stdout.write(dumps({"scenario": scenario.name, "passed": ok, "invariants": results}))
    return EXIT_OK if ok else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
