"""Command-line entrypoint."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List

import yaml

from wdn_design.acceptance import CASES, AcceptanceFailure
from wdn_design.config import merge_config, resolve_config
from wdn_design.design import InfeasibleDesignError
from wdn_design.hydraulics import ConvergenceError
from wdn_design.io import ParseError
from wdn_design.pipeline import run_cost, run_design, run_solve, run_validate, write_manifest, write_outputs
from wdn_design.report import Report, render_table, to_machine

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_INFEASIBLE = 4
EXIT_ACCEPTANCE = 5


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to YAML configuration file")
    common.add_argument("--format", choices=["table", "machine"], default="table", help="Output format")
    common.add_argument("--manifest", help="Write a run manifest JSON to this path")
    common.add_argument("--output-dir", help="Write each report table as CSV into this directory")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--tolerance-mass", type=float, help="Mass residual tolerance in m3/s")
    common.add_argument("--tolerance-energy", type=float, help="Loop energy residual tolerance in m")

    network = argparse.ArgumentParser(add_help=False)
    network.add_argument("input", help="Network file (.wdn)")
    network.add_argument("--loops", choices=["auto", "explicit"], default="auto", help="Loop set source")

    parser = argparse.ArgumentParser(description="Water distribution network solver and tank design optimizer")
    commands = parser.add_subparsers(dest="command", required=True)
    solve = commands.add_parser("solve", parents=[common, network], help="Solve steady-state pipe flows")
    solve.add_argument("--reference", action="store_true", help="Compare against the file's REFERENCE series")
    commands.add_parser("cost", parents=[common, network], help="Itemize network costs at the current tank levels")
    design = commands.add_parser("design", parents=[common, network], help="Optimize tank depth and elevation")
    design.add_argument("--seed", type=int, help="Seed for the start sampler")
    validate = commands.add_parser("validate", parents=[common], help="Run acceptance checks on the bundled cases")
    validate.add_argument("--case", action="append", choices=list(CASES), help="Restrict to a case (repeatable)")
    validate.add_argument("--data-dir", help="Directory holding case_a.wdn, case_b.wdn and case_c.wdn")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"solver": {}, "design": {}}
    if args.tolerance_mass is not None:
        overrides["solver"]["tol_mass"] = args.tolerance_mass
    if args.tolerance_energy is not None:
        overrides["solver"]["tol_energy"] = args.tolerance_energy
    if getattr(args, "seed", None) is not None:
        overrides["design"]["seed"] = args.seed
    return overrides


def _emit(result: Report, args: argparse.Namespace, output_dir: str | None) -> None:
    sys.stdout.write(to_machine(result) + "\n" if args.format == "machine" else render_table(result))
    if output_dir:
        write_outputs(result, output_dir)


def _dispatch(args: argparse.Namespace, settings: Dict[str, Any], overrides: Dict[str, Any]) -> Report:
    if args.command == "solve":
        return run_solve(args.input, settings, overrides, args.loops, args.reference)
    if args.command == "cost":
        return run_cost(args.input, settings, overrides, args.loops)
    if args.command == "design":
        return run_design(args.input, settings, overrides, args.loops)
    return run_validate(merge_config(settings, overrides), args.case, args.data_dir)


def main(argv: List[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(message)s")
    try:
        settings = resolve_config(args.config)
    except (OSError, yaml.YAMLError) as error:
        print(f"error: cannot load configuration {args.config}: {error}", file=sys.stderr)
        return EXIT_VALIDATION
    overrides = _overrides(args)
    output = settings.get("output") or {}
    output_dir = args.output_dir or output.get("dir")
    manifest = args.manifest or output.get("manifest")
    try:
        result = _dispatch(args, settings, overrides)
    except ParseError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_PARSE
    except ConvergenceError as error:
        if error.report is not None:
            _emit(error.report, args, output_dir)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InfeasibleDesignError as error:
        print(f"error: {error}", file=sys.stderr)
        if error.candidate is not None:
            print(f"least-violating candidate: {error.candidate.variables.levels}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AcceptanceFailure as error:
        if error.report is not None:
            _emit(error.report, args, output_dir)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except ValueError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(result, args, output_dir)
    if manifest:
        write_manifest(manifest, args.command, getattr(args, "input", None), merge_config(settings, overrides))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
