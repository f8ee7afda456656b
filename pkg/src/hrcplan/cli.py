"""Command-line entry point.

Subcommands: generate | train | benchmark | simulate | uncertainty-report.
Every subcommand takes --config (defaults to the packaged example config)
and --seed (overrides the config seed). Exit codes: 0 success, 2 config
error, 3 training divergence, 4 benchmark sweep errors above threshold.
"""

import argparse
import sys

from . import harness
from .errors import ConfigError, DivergenceError


def _add_common(sub):
    sub.add_argument("--config", default=None,
                     help="experiment config JSON (default: packaged config)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hrcplan",
                                 description="Human-aware manipulator planning toolchain")
    sp = ap.add_subparsers(dest="command", required=True)

    g = sp.add_parser("generate", help="write human and expert datasets")
    g.add_argument("--what", choices=["all", "human", "expert"], default="all")
    _add_common(g)

    t = sp.add_parser("train", help="train the predictor or the planner")
    t.add_argument("--target", choices=["predictor", "planner"], required=True)
    _add_common(t)

    b = sp.add_parser("benchmark", help="compare planners on shared scenarios")
    _add_common(b)

    s = sp.add_parser("simulate", help="run the dynamic three-case comparison")
    _add_common(s)

    u = sp.add_parser("uncertainty-report",
                      help="K sweep and error-uncertainty correlation")
    _add_common(u)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = harness.load_config(args.config, seed_override=args.seed)
        if args.command == "generate":
            harness.cmd_generate(cfg, what=args.what)
        elif args.command == "train":
            harness.cmd_train(cfg, target=args.target)
        elif args.command == "benchmark":
            summary = harness.cmd_benchmark(cfg)
            if summary.get("_error_exit"):
                print("benchmark: scenario error rate above threshold",
                      file=sys.stderr)
                return 4
        elif args.command == "simulate":
            harness.cmd_simulate(cfg)
        elif args.command == "uncertainty-report":
            harness.cmd_uncertainty_report(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
