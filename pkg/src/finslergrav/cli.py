"""Command-line front end: batch scenario execution with a strict exit contract.

Exit codes: 0 on success, 1 on configuration errors, 2 when any report entry
fails its tolerance.  All state comes from the config document plus the
seed; reports and CSV artifacts are byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import argparse
import os
import sys

from .brane import ParameterError
from .config import validate_config
from .expr import ExprError
from .quadrature import QuadratureError
from .scenarios import run_scenario
from .solutions import RegimeError
from .taylor import DegenerateMetricError, DomainError, ShapeError

_DATA_ERRORS = (ParameterError, ExprError, QuadratureError, RegimeError,
                DegenerateMetricError, DomainError, ShapeError)

_SUBCOMMAND_SCENARIOS = {
    "audit": ("geometry-audit",),
    "construct": ("killing-construct", "eightd-construct"),
    "brane": ("brane-diagonal", "brane-offdiagonal"),
    "scan": ("brane-diagonal",),
    "dispersion": ("dispersion-roundtrip",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finslergrav",
        description="bundle-geometry audits, solution construction and checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("audit", "construct", "brane", "scan", "dispersion", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a scenario config")
        p.add_argument("--out", default=".", help="artifact output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="multiply every tolerance by this factor")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    config, errors = validate_config(text)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    if args.command == "validate":
        sys.stdout.write(config.normalized_json())
        return 0
    allowed = _SUBCOMMAND_SCENARIOS[args.command]
    if config.scenario not in allowed:
        print(f"config error: scenario {config.scenario!r} not valid for "
              f"'{args.command}' (expected one of {allowed})", file=sys.stderr)
        return 1
    if args.seed is not None:
        config.data["seed"] = args.seed
    if args.command == "scan" and "scan" not in config.parameters:
        print("config error: scan subcommand needs a parameters.scan block",
              file=sys.stderr)
        return 1

    try:
        report, artifacts = run_scenario(config, tolerance_scale=args.tolerance_scale)
    except _DATA_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    for name, text_data in sorted(artifacts.items()):
        with open(os.path.join(args.out, name), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(text_data)

    for entry in sorted(report.entries, key=lambda e: e.label):
        print(f"{entry.label}: {entry.verdict} (max={entry.max_residual:.3e})")
    print(f"report: {report_path}")
    return 0 if report.passed else 2


if __name__ == "__main__":
    sys.exit(main())
