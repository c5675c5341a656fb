"""Command line entry point: ``behaviorshift <stage> --config PATH``."""

import argparse
import logging
import os
import sys

from . import pipeline
from .config import load_config
from .exceptions import BehaviorShiftError

LOG_ENV = "BEHAVIORSHIFT_LOG_LEVEL"

STAGES = {
    "featurize": pipeline.featurize,
    "fit": pipeline.fit,
    "detect": pipeline.detect,
    "evaluate": pipeline.evaluate,
    "simulate": pipeline.simulate,
    "run": pipeline.run,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="behaviorshift",
        description="Detect behavioural change-points in daily mobile-sensing data.")
    parser.add_argument("command", choices=list(STAGES))
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--patients", help="comma-separated patient ids to process")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    patients = None
    if args.patients:
        patients = [p.strip() for p in args.patients.split(",") if p.strip()]
    try:
        cfg = load_config(args.config, seed=args.seed, patients=patients)
        STAGES[args.command](cfg)
    except (BehaviorShiftError, OSError, ValueError, KeyError) as exc:
        print(f"behaviorshift {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
