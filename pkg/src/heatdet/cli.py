"""Command line entry point: ``heatdet run | validate | selftest``."""

from __future__ import annotations

import argparse
import logging
import sys

from .parallel import set_threads


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatdet", description="Heat-determinant experiments on model manifolds.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute the experiments of a config file")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    r.add_argument("--no-plot", action="store_true", help="skip SVG output")
    r.add_argument("--out", default=None, help="output directory (overrides output_dir)")

    v = sub.add_parser("validate", help="parse a config and report the tail-valid window")
    v.add_argument("config")

    s = sub.add_parser("selftest", help="run the built-in property checks")
    s.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            logging.getLogger("heatdet").error("--threads must be >= 1")
            return 1
        set_threads(args.threads)
    if args.command == "run":
        from .runner import run

        return run(args.config, out=args.out, threads=args.threads, plot=False if args.no_plot else None)
    if args.command == "validate":
        from .runner import validate

        return validate(args.config)
    from .selftest import run_selftest

    return run_selftest()


if __name__ == "__main__":
    sys.exit(main())
