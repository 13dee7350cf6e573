"""Command-line entry point.

Every subcommand takes a TOML config file and the shared flags --out,
--threads and --tolerance-scale, runs one experiment, prints its check
rows, and exits 0 exactly when every row passed.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import (
    check_spacetime_report,
    geometrize_report,
    recovery_report,
    run_first_law,
    run_proposition_suite,
    run_theorem_w_sweep,
)
from .reports import fmt, format_check

_COMMANDS = {
    "check-spacetime": (check_spacetime_report,
                        "metric and compatibility residuals of the configured spacetime"),
    "geometrize": (geometrize_report,
                   "curvature conditions of the geometrized potential"),
    "recover": (recovery_report,
                "flat-decomposition round trip of the geometrized model"),
    "first-law": (run_first_law,
                  "straight-line center-of-mass tracks in flat spacetime"),
    "theorem-w": (run_theorem_w_sweep,
                  "shrinking-body convergence sweep against the reference geodesic"),
    "props": (run_proposition_suite,
              "the full invariant suite as one pass/fail table"),
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nclab",
        description="classical-spacetime experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML experiment configuration")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help="worker threads for sweep entries")
        p.add_argument("--tolerance-scale", type=float, default=None,
                       metavar="F",
                       help="multiply every pass/fail threshold by F")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out_dir=args.out, threads=args.threads,
                          tolerance_scale=args.tolerance_scale)
        report = _COMMANDS[args.command][0](cfg)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    for row in report.rows:
        print(format_check(row))
    if args.command == "theorem-w":
        print(f"fitted convergence order: {fmt(report.fitted_order)} "
              f"(informational; noise floor {fmt(report.noise_floor)})")
    print(f"outputs written under {cfg.out_dir}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
