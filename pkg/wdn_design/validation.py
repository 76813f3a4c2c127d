"""Validation checks for network inputs."""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

import networkx as nx

DEMAND_BALANCE_TOL = 1e-9


class NetworkValidationError(ValueError):
    """Raised when a network or a scenario is inconsistent."""


def validate_unique_ids(ids: Iterable[str], kind: str) -> None:
    duplicates = sorted(key for key, count in Counter(ids).items() if count > 1)
    if duplicates:
        raise NetworkValidationError(f"Duplicate {kind} ids: {duplicates}.")


def validate_endpoints(pipes: Sequence, node_ids: Iterable[str]) -> None:
    """Every pipe must join two distinct, declared nodes."""
    known = set(node_ids)
    for pipe in pipes:
        dangling = [end for end in (pipe.from_node, pipe.to_node) if end not in known]
        if dangling:
            raise NetworkValidationError(f"Pipe {pipe.id} references unknown node(s) {dangling}.")
        if pipe.from_node == pipe.to_node:
            raise NetworkValidationError(f"Pipe {pipe.id} starts and ends at node {pipe.from_node}.")


def validate_has_tank(tanks: Sequence) -> None:
    if not tanks:
        raise NetworkValidationError("Network has no tank; heads are undetermined without a fixed-head node.")


def validate_connected(graph: nx.MultiGraph) -> None:
    components = [sorted(component) for component in nx.connected_components(graph)]
    if len(components) > 1:
        detached = sorted(components, key=len)[0]
        raise NetworkValidationError(f"Network is disconnected; component {detached} is not reachable.")


def validate_pipe_fields(pipe, headloss_model: str) -> None:
    if not pipe.length > 0:
        raise NetworkValidationError(f"Pipe {pipe.id} has non-positive length {pipe.length}.")
    if not pipe.diameter > 0:
        raise NetworkValidationError(f"Pipe {pipe.id} has non-positive diameter {pipe.diameter}.")
    if headloss_model == "HW" and not pipe.roughness > 0:
        raise NetworkValidationError(f"Pipe {pipe.id} needs a positive Hazen-Williams coefficient.")
    if headloss_model == "DW" and not pipe.roughness >= 0:
        raise NetworkValidationError(f"Pipe {pipe.id} has negative rugosity {pipe.roughness}.")


def validate_node_fields(node) -> None:
    if not math.isfinite(node.demand) or not math.isfinite(node.elevation):
        raise NetworkValidationError(f"Node {node.id} has a non-finite demand or elevation.")
    if node.is_tank:
        if not node.water_depth > 0:
            raise NetworkValidationError(f"Tank {node.id} needs a positive water depth, got {node.water_depth}.")
        if node.height_above_ground < 0:
            raise NetworkValidationError(f"Tank {node.id} has negative height above ground.")
        if node.volume is not None and not node.volume > 0:
            raise NetworkValidationError(f"Tank {node.id} has non-positive volume {node.volume}.")


def validate_pump_fields(pump, tank) -> None:
    if tank is None or not tank.is_tank:
        raise NetworkValidationError(f"Pump refers to {pump.tank_id}, which is not a tank.")
    if not 0 < pump.efficiency <= 1:
        raise NetworkValidationError(f"Pump for tank {pump.tank_id} has efficiency {pump.efficiency} outside (0, 1].")
    if not 0 < pump.operating_hours <= 24:
        raise NetworkValidationError(
            f"Pump for tank {pump.tank_id} has operating hours {pump.operating_hours} outside (0, 24]."
        )
    if not 0 < pump.daily_hours <= 24:
        raise NetworkValidationError(f"Pump for tank {pump.tank_id} has daily hours {pump.daily_hours} outside (0, 24].")
    if pump.elevation >= tank.elevation + tank.height_above_ground:
        raise NetworkValidationError(f"Pump for tank {pump.tank_id} must sit below the tank base.")
    if pump.supply_length <= 0:
        raise NetworkValidationError(f"Pump for tank {pump.tank_id} has non-positive supply pipe length.")


def validate_demand_balance(junctions: Sequence, tanks: Sequence) -> None:
    """Declared tank supplies must match junction demands, or stay within them when some tanks declare none."""
    declared = [tank.expected_supply for tank in tanks if tank.expected_supply is not None]
    if not declared:
        return
    imbalance = sum(node.demand for node in junctions) - sum(declared)
    if len(declared) == len(tanks) and abs(imbalance) > DEMAND_BALANCE_TOL:
        raise NetworkValidationError(
            f"Unbalanced demand: junction demands exceed declared tank supplies by {imbalance:.3e} m3/s."
        )
    if imbalance < -DEMAND_BALANCE_TOL:
        raise NetworkValidationError(
            f"Unbalanced demand: declared tank supplies exceed junction demands by {-imbalance:.3e} m3/s, "
            "leaving nothing for the tanks without a declared supply."
        )
