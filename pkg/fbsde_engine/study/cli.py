"""
Command-line entry point for FBSDE studies.

Usage:
    python -m fbsde_engine.study.cli run studies/b1_smoke.yaml
    python -m fbsde_engine.study.cli moments studies/b1_smoke.yaml --output-dir results/moments
    python -m fbsde_engine.study.cli validate studies/custom.yaml --log-level DEBUG

Exit codes:
    0  finished (failed cells, if any, are listed in the ledger)
    2  configuration or domain error
    3  numeric failure outside a study cell, or every cell failed

Set FBSDE_NUM_WORKERS (or pass --workers) to choose the number of sampling threads.
"""

import argparse
import logging
import sys
from typing import List, Optional

from levy_engine.errors import ConfigurationError, DomainError, NUMERIC_ERRORS, RefinementRequiredError
from fbsde_engine.study.config import load_config
from fbsde_engine.study.runner import StudyRunner


EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_NUMERIC = 3


def _banner(title: str):
    print("=" * 60)
    print(title)
    print("=" * 60)


def run_command(args) -> int:
    config = load_config(args.config)
    runner = StudyRunner(config, args.output_dir, args.workers, show_progress=not args.no_progress)
    _banner(f"Study {config.study_id} ({config.kind.value})")
    print(f"Config hash: {config.config_hash}")
    print(f"Seed: {config.seed}")
    print(f"Model: {config.model.representation.identifier}")
    print(f"Problem: {runner.setup().fbsde.name}")
    print(f"Grid: N in {list(config.scheme.steps)}, n in {list(config.scheme.levels)}, M = {config.scheme.paths}")

    result = runner.run()
    artifacts = runner.save(result)

    print()
    _banner("Summary")
    print(f"Cells: {len(result.ledger)} ({result.failed_cells} failed)")
    for _, row in result.ledger[result.ledger["status"] != "ok"].iterrows():
        print(f"  ✗ {row['cell']}: {row['status']}")
    if result.fit is not None:
        print(f"Fitted {result.fit.scale.value} slope: {result.fit.slope:.3f} (R² {result.fit.r_squared:.3f})")
    for name, passed in result.checks.items():
        print(f"  {'✓' if passed else '✗'} {name}")
    for name, path in artifacts.items():
        print(f"  {name}: {path}")

    if len(result.ledger) and result.failed_cells == len(result.ledger):
        return EXIT_NUMERIC
    return EXIT_OK


def moments_command(args) -> int:
    config = load_config(args.config)
    runner = StudyRunner(config, args.output_dir)
    _banner(f"Moments of {config.model.model.identifier}")
    table = runner.moments()
    artifacts = runner.save_moments(table)
    print(table.to_string(index=False))
    print()
    for name, path in artifacts.items():
        print(f"  {name}: {path}")
    return EXIT_OK


def validate_command(args) -> int:
    config = load_config(args.config)
    runner = StudyRunner(config, args.output_dir)
    _banner(f"Validating {config.study_id}")
    print("✓ Configuration is valid")
    result = runner.validate()
    report = result.invertibility
    print(f"Invertibility of h_x·e + 1 at n = {result.level:g}: {report.status.value}")
    if report.message:
        print(f"  {report.message}")
    lipschitz = result.lipschitz
    print(f"Declared K = {lipschitz.declared_K:g}")
    for name, value in sorted(lipschitz.estimates.items()):
        mark = "✗" if name in lipschitz.violations else "✓"
        print(f"  {mark} {name}: {value:.4g}")
    if lipschitz.rho_violations:
        print(f"  ✗ |rho(e)| <= K min(1, |e|) fails at {len(lipschitz.rho_violations)} grid points")
    # Advisory: a failed check does not make the config invalid.
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Run Lévy-driven FBSDE convergence studies")
    parser.add_argument("--log-level", type=str, default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run a study and write ledger, plot table and manifest")
    run.add_argument("config", type=str, help="Study YAML file")
    run.add_argument("--output-dir", type=str, default=None, help="Override output_dir")
    run.add_argument("--workers", type=int, default=None, help="Sampling threads")
    run.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    run.set_defaults(handler=run_command)

    moments = subparsers.add_parser("moments", help="Write the truncation moments table")
    moments.add_argument("config", type=str, help="Study YAML file")
    moments.add_argument("--output-dir", type=str, default=None, help="Override output_dir")
    moments.set_defaults(handler=moments_command)

    validate = subparsers.add_parser("validate", help="Check a config and the problem's structural assumptions")
    validate.add_argument("config", type=str, help="Study YAML file")
    validate.add_argument("--output-dir", type=str, default=None, help=argparse.SUPPRESS)
    validate.set_defaults(handler=validate_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ConfigurationError, DomainError, RefinementRequiredError) as exc:
        print(f"✗ Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIGURATION
    except NUMERIC_ERRORS as exc:
        print(f"✗ Numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
