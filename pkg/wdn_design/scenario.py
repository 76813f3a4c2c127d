"""Scenario assembly from an input file and layered configuration."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping

from wdn_design.config import DEFAULTS, merge_config
from wdn_design.costing import CostBreakdown, EconomicParams, FoundationParams, WindParams, total_cost
from wdn_design.design import DesignBounds, DesignOptions
from wdn_design.hydraulics import FlowSolution, SolverOptions, solve_wfp
from wdn_design.io import InputDocument, read_input
from wdn_design.network import Loop, LoopSet, Network, accept_explicit_loops, build_network, cycle_basis, signed_pipes
from wdn_design.validation import NetworkValidationError

logger = logging.getLogger(__name__)

SECTION_KEYS = {"ECONOMICS": "economics", "WIND": "wind", "FOUNDATION": "foundation", "DESIGN": "design"}
LOOP_MODES = ("auto", "explicit")


@dataclass(frozen=True, eq=False)
class Scenario:
    document: InputDocument
    network: Network
    loopset: LoopSet
    settings: Dict[str, Any]
    solver: SolverOptions
    economics: EconomicParams
    wind: WindParams
    foundation: FoundationParams
    bounds: DesignBounds
    design: DesignOptions


def scenario_settings(
    settings: Mapping[str, Any], document: InputDocument, overrides: Mapping[str, Any] | None = None
) -> Dict[str, Any]:
    """Configuration layers: defaults, settings, input-file sections, then overrides."""
    from_document = {key: document.key_values(name) for name, key in SECTION_KEYS.items() if document.has(name)}
    return merge_config(merge_config(merge_config(DEFAULTS, settings), from_document), overrides)


def explicit_loops(network: Network, document: InputDocument) -> LoopSet:
    rows = document.loops()
    if not rows:
        raise NetworkValidationError("Explicit loops requested but the input has no [LOOPS] section.")
    loops = []
    for index, row in enumerate(rows, start=1):
        pipes = tuple(signed_pipes(network, row["pipes"], index))
        if row["kind"] == "closed":
            loops.append(Loop(pipes=pipes))
        else:
            _, start, end = row["kind"].split(":")
            loops.append(Loop(pipes=pipes, start=start, end=end))
    return accept_explicit_loops(network, loops)


def build_scenario(
    document: InputDocument,
    settings: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
    loops: str = "auto",
) -> Scenario:
    if loops not in LOOP_MODES:
        raise ValueError(f"Unknown loop mode {loops!r}; expected one of {LOOP_MODES}.")
    merged = scenario_settings(settings, document, overrides)
    network = build_network(document.sections, merged["economics"])
    loopset = explicit_loops(network, document) if loops == "explicit" else cycle_basis(network)
    solver = SolverOptions.from_config(merged["solver"])
    return Scenario(
        document=document,
        network=network,
        loopset=loopset,
        settings=merged,
        solver=solver,
        economics=EconomicParams.from_mapping(merged["economics"]),
        wind=WindParams.from_mapping(merged["wind"]),
        foundation=FoundationParams.from_mapping(merged["foundation"]),
        bounds=DesignBounds.from_config(merged["design"]),
        design=DesignOptions.from_config(merged["design"], solver),
    )


def load_scenario(
    path: str | Path,
    settings: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
    loops: str = "auto",
) -> Scenario:
    logger.info("Parsing input %s", path)
    return build_scenario(read_input(path), settings, overrides, loops)


def require_economics(scenario: Scenario) -> None:
    if not scenario.document.has("ECONOMICS"):
        raise NetworkValidationError(f"{scenario.document.path}: missing required section [ECONOMICS].")


def solve_scenario(scenario: Scenario) -> FlowSolution:
    logger.info("Solving water flow problem (%d pipes, %d loops)", len(scenario.network.pipes), len(scenario.loopset))
    return solve_wfp(scenario.network, scenario.loopset, scenario.solver)


def cost_scenario(scenario: Scenario, solution: FlowSolution) -> CostBreakdown:
    require_economics(scenario)
    logger.info("Evaluating costs")
    return total_cost(scenario.network, solution, scenario.economics, scenario.wind, scenario.foundation)
