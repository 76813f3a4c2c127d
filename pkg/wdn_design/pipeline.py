"""Command execution logic."""

from __future__ import annotations

import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Sequence

import pandas as pd

from wdn_design import __version__, acceptance, io, report
from wdn_design.design import DesignSolution, DesignVariables, compare_designs, evaluate_design, solve_dom
from wdn_design.hydraulics import ConvergenceError
from wdn_design.report import Report
from wdn_design.scenario import Scenario, cost_scenario, load_scenario, require_economics, solve_scenario

logger = logging.getLogger("wdn_design")


def _solve_summary(scenario: Scenario, solution) -> Dict[str, Any]:
    return {
        "headloss_model": scenario.network.headloss_model,
        "loops": len(scenario.loopset),
        "converged": solution.converged,
        "iterations": solution.iterations,
        "mass_residual": solution.mass_residual,
        "energy_residual": solution.energy_residual,
        "head_closure": solution.closure,
    }


def _solve_with_diagnostics(scenario: Scenario, command: str):
    """Solve, attaching the best iterate's tables to a convergence failure."""
    try:
        return solve_scenario(scenario)
    except ConvergenceError as error:
        if error.solution is not None:
            error.report = Report(
                command=command,
                tables={
                    "pipes": report.pipe_table(scenario.network, error.solution),
                    "nodes": report.node_table(scenario.network, error.solution),
                },
                summary=_solve_summary(scenario, error.solution),
            )
        raise


def run_solve(
    input_path: str | Path,
    settings: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
    loops: str = "auto",
    reference: bool = False,
) -> Report:
    scenario = load_scenario(input_path, settings, overrides, loops)
    solution = _solve_with_diagnostics(scenario, "solve")
    tables = {
        "pipes": report.pipe_table(scenario.network, solution),
        "nodes": report.node_table(scenario.network, solution),
    }
    if reference:
        tables["mae"] = report.mae_table(scenario.network, solution, scenario.document)
    return Report(command="solve", tables=tables, summary=_solve_summary(scenario, solution))


def run_cost(
    input_path: str | Path,
    settings: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
    loops: str = "auto",
) -> Report:
    scenario = load_scenario(input_path, settings, overrides, loops)
    require_economics(scenario)
    solution = _solve_with_diagnostics(scenario, "cost")
    breakdown = cost_scenario(scenario, solution)
    summary = _solve_summary(scenario, solution)
    summary["total_usd"] = breakdown.total
    return Report(
        command="cost",
        tables={
            "costs": report.cost_table(breakdown),
            "pumps": report.pump_table(breakdown),
            "tanks": report.tank_table(breakdown),
            "pipe_costs": breakdown.pipe_costs.rename_axis("pipe").reset_index(),
        },
        summary=summary,
    )


def run_design(
    input_path: str | Path,
    settings: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
    loops: str = "auto",
) -> Report:
    scenario = load_scenario(input_path, settings, overrides, loops)
    require_economics(scenario)
    network, loopset = scenario.network, scenario.loopset
    levels = scenario.document.baseline()
    baseline = None
    baseline_solution = None
    if levels:
        baseline = DesignVariables({**DesignVariables.from_network(network).levels, **levels})
        evaluation = evaluate_design(
            network, loopset, baseline, scenario.economics, scenario.wind, scenario.foundation, scenario.bounds, scenario.solver
        )
        if evaluation.breakdown is not None:
            baseline_solution = DesignSolution.from_evaluation(
                evaluation, scenario.economics, scenario.bounds.pressure_tolerance
            )
            if not baseline_solution.feasible:
                logger.warning("Baseline design violates the pressure or window bounds")

    logger.info("Searching design space (seed %d)", scenario.design.seed)
    optimized = solve_dom(
        network, loopset, scenario.bounds, scenario.economics, scenario.wind, scenario.foundation, scenario.design, baseline
    )
    designed = network.with_tank_levels(optimized.variables.levels)
    tables = {
        "design": report.design_table(optimized),
        "costs": report.cost_table(optimized.breakdown),
        "pumps": report.pump_table(optimized.breakdown),
        "tanks": report.tank_table(optimized.breakdown),
        "nodes": report.node_table(designed, optimized.solution),
        "margins": optimized.margins.rename_axis("node").reset_index(),
        "trace": report.trace_table(optimized),
    }
    if baseline_solution is not None:
        tables["comparison"] = report.comparison_table(compare_designs(baseline_solution, optimized))
    summary = {
        "total_usd": optimized.cost,
        "feasible": optimized.feasible,
        "evaluations": optimized.evaluations,
        "failed_evaluations": optimized.failures,
        "penalty_weight": optimized.penalty_weight,
        "seed": scenario.design.seed,
    }
    return Report(command="design", tables=tables, summary=summary)


def run_validate(
    settings: Mapping[str, Any],
    cases: Sequence[str] | None = None,
    data_dir: str | Path | None = None,
) -> Report:
    checks = acceptance.run_checks(settings, cases, data_dir)
    table = pd.DataFrame(
        [
            {"case": c.case, "metric": c.metric, "value": c.value, "low": c.low, "high": c.high, "passed": c.passed}
            for c in checks
        ],
        columns=["case", "metric", "value", "low", "high", "passed"],
    )
    failed = [check for check in checks if not check.passed]
    result = Report(command="validate", tables={"checks": table}, summary={"checks": len(checks), "failed": len(failed)})
    if failed:
        raise acceptance.AcceptanceFailure(failed, result)
    return result


def write_outputs(result: Report, output_dir: str | Path) -> None:
    io.ensure_dirs([output_dir])
    for name, table in result.tables.items():
        io.write_tidy(table, Path(output_dir) / f"{result.command}_{name}.csv")


def write_manifest(path: str | Path, command: str, input_path: str | None, settings: Mapping[str, Any]) -> None:
    logger.info("Writing manifest")
    manifest = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "command": command,
        "input": input_path,
        "parameters": dict(settings),
    }
    io.write_json(manifest, path)
