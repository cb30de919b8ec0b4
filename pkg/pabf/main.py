"""
Main entry point for the PABF toolkit.

This module parses the command line, sets up logging and dispatches to the
run, compare, project-file and check subcommands.
"""

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from pabf import __version__, driver, storage
from pabf.checks import run_checks
from pabf.config import load_run_spec, load_settings
from pabf.errors import PABFError
from pabf.logger import setup_logger
from pabf.projection import project, projection_defect

logger = logging.getLogger(__name__)


def build_parser():
    """Argument parser for all subcommands."""
    parser = argparse.ArgumentParser(prog="pabf", description="Projected adaptive biasing force sampling")
    parser.add_argument("--version", action="version", version=f"pabf {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="execute one ABF or PABF run")
    run.add_argument("--config", required=True, help="run configuration file")
    run.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run.add_argument("--out", default=None, help="output directory (default: output_dir of the config)")

    compare = commands.add_parser("compare", help="replicated ABF vs PABF experiment")
    compare.add_argument("--config", required=True, help="run configuration file")
    compare.add_argument("--replicas", type=int, required=True, help="independent runs per mode")
    compare.add_argument("--out", required=True, help="output directory")
    compare.add_argument("--workers", type=int, default=None, help="worker processes (default: PABF_WORKERS)")
    compare.add_argument("--flatness-threshold", type=float, default=0.01, help="level for flatness_times.csv")

    project_file = commands.add_parser("project-file", help="project a force field read from CSV")
    project_file.add_argument("--force", required=True, help="vector field CSV")
    project_file.add_argument("--density", required=True, help="scalar field CSV")
    project_file.add_argument("--out", required=True, help="output directory")
    project_file.add_argument("--tol", type=float, default=1e-8, help="CG relative tolerance")

    check = commands.add_parser("check", help="run the numerical correctness suite")
    check.add_argument("--quick", action="store_true", help="fewer configurations, shorter trajectories")
    return parser


def _load(args):
    spec = load_run_spec(args.config)
    if getattr(args, "seed", None) is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    return spec


def cmd_run(args, settings):
    spec = _load(args)
    out = Path(args.out or spec.output_dir)
    output = driver.run(spec)
    driver.write_run_output(output, out)
    logger.info(f"Run finished, outputs in {out}")
    return 0


def cmd_compare(args, settings):
    spec = _load(args)
    workers = args.workers if args.workers is not None else settings.workers
    results = driver.compare(spec, args.replicas, workers)
    rows = driver.write_comparison(results, args.out, args.flatness_threshold)
    logger.info(f"Comparison finished, outputs in {args.out}")
    for name, v in driver.comparison_verdicts(rows, args.replicas).items():
        print(
            f"{name} variance reduction: {'PASS' if v.passed else 'FAIL'}  "
            f"gradA <= F at {v.reduced}/{v.times} times ({v.fraction_reduced:.0%}, need 95%), "
            f"{v.within_allowance}/{v.times} within 2 standard errors"
        )
    return 0


def cmd_project_file(args, settings):
    F = storage.read_vector_field(args.force)
    psi = storage.read_scalar_field(args.density)
    result = project(F, psi, tol=args.tol)
    out = Path(args.out)
    storage.write_scalar_field(out / "A.csv", result.A)
    storage.write_vector_field(out / "gradA.csv", result.gradA)
    with storage.open_output(out / "projection.txt") as handle:
        handle.write(f"iterations = {result.iterations}\n")
        handle.write(f"residual_div = {storage.fmt(result.residual_div)}\n")
        handle.write(f"defect = {storage.fmt(projection_defect(F, psi, result))}\n")
    logger.info(f"Projection written to {out} ({result.iterations} iterations)")
    return 0


def cmd_check(args, settings):
    results = run_checks(quick=args.quick)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'}  {result.name}: {result.detail}")
    return 0 if all(result.passed for result in results) else 1


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "project-file": cmd_project_file,
    "check": cmd_check,
}


def main(argv=None):
    """
    Run the command line interface.

    Args:
        argv: Argument list without the program name; sys.argv[1:] by default.

    Returns:
        Process exit code: 0 on success, 1 on any toolkit error or failed check.
    """
    args = build_parser().parse_args(argv)

    try:
        settings = load_settings()
        setup_logger(settings)
        return COMMANDS[args.command](args, settings)
    except (PABFError, ValidationError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {str(e).splitlines()[0]}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
