"""Report tables and their machine-readable form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping

import numpy as np
import pandas as pd

from wdn_design.costing import CostBreakdown
from wdn_design.design import DesignSolution
from wdn_design.hydraulics import FlowSolution, mae, reynolds
from wdn_design.io import InputDocument
from wdn_design.network import Network


@dataclass
class Report:
    command: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)


def pipe_table(network: Network, solution: FlowSolution) -> pd.DataFrame:
    rows = []
    for pipe, state in zip(network.pipes, solution.pipe_states):
        flow = float(solution.flows[pipe.id])
        area = math.pi * pipe.diameter**2 / 4.0
        rows.append(
            {
                "pipe": pipe.id,
                "from": pipe.from_node,
                "to": pipe.to_node,
                "flow_Ls": flow * 1000.0,
                "velocity_ms": flow / area,
                "headloss_m": state.resistance * flow * abs(flow) ** (state.exponent - 1.0),
                "reynolds": float(reynolds(flow, pipe.diameter, network.viscosity)),
                "friction_factor": np.nan if state.friction_factor is None else state.friction_factor,
                "resistance": state.resistance,
            }
        )
    return pd.DataFrame(rows)


def node_table(network: Network, solution: FlowSolution) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "node": [node.id for node in network.nodes],
            "kind": [node.kind for node in network.nodes],
            "elevation": [node.elevation for node in network.nodes],
            "head": solution.heads.to_numpy(),
            "pressure": solution.pressures.to_numpy(),
        }
    )


def cost_table(breakdown: CostBreakdown) -> pd.DataFrame:
    rows = [{"component": name, "usd": value} for name, value in breakdown.components().items()]
    for tank in breakdown.tanks:
        rows.append({"component": f"tank_material:{tank.tank}", "usd": tank.material})
        rows.append({"component": f"tank_foundation:{tank.tank}", "usd": tank.foundation})
    for pump in breakdown.pumps:
        rows.append({"component": f"pump_npv:{pump.tank}", "usd": pump.npv})
    return pd.DataFrame(rows, columns=["component", "usd"])


def pump_table(breakdown: CostBreakdown) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "tank": pump.tank,
                "flow_Ls": pump.flow * 1000.0,
                "supply_diameter_mm": pump.supply_diameter * 1000.0,
                "resistance": pump.resistance,
                "static_head": pump.static_head,
                "pump_head": pump.pump_head,
                "power_kW": pump.power,
                "energy_kWh_day": pump.energy,
                "cost_usd_day": pump.daily_cost,
            }
            for pump in breakdown.pumps
        ]
    )


def tank_table(breakdown: CostBreakdown) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "tank": tank.tank,
                "volume": tank.volume,
                "diameter": tank.diameter,
                "h_b": tank.height_above_ground,
                "h_r": tank.water_depth,
                "force_kN": tank.wind_force,
                "moment_kNm": tank.wind_moment,
                "lever_arm": tank.lever_arm,
            }
            for tank in breakdown.tanks
        ]
    )


def design_table(design: DesignSolution) -> pd.DataFrame:
    return pd.DataFrame(
        [{"tank": tank_id, "h_r": h_r, "h_b": h_b} for tank_id, (h_r, h_b) in design.variables.levels.items()],
        columns=["tank", "h_r", "h_b"],
    )


def trace_table(design: DesignSolution) -> pd.DataFrame:
    return pd.DataFrame(
        [{"start": item.index, "point": " ".join(f"{v:.4f}" for v in item.start), "best_objective": item.best_objective} for item in design.trace],
        columns=["start", "point", "best_objective"],
    )


def comparison_table(deltas: pd.DataFrame) -> pd.DataFrame:
    return deltas.loc[:, ["component", "baseline", "optimized", "delta_percent"]].reset_index(drop=True)


def _modeled(solution: FlowSolution, kind: str) -> pd.Series:
    if kind == "flow":
        return solution.flows * 1000.0
    return solution.pressures if kind == "pressure" else solution.heads


def mae_table(network: Network, solution: FlowSolution, document: InputDocument) -> pd.DataFrame:
    rows = []
    for kind in ("flow", "pressure", "head"):
        modeled = _modeled(solution, kind)
        for label in document.reference_labels(kind):
            reference = document.reference(kind, label)
            missing = sorted(set(reference) - set(modeled.index))
            if missing:
                raise ValueError(f"Reference {kind} series {label!r} names unknown ids {missing}.")
            ids = list(reference)
            values = modeled.loc[ids].to_numpy()
            expected = np.array([reference[item] for item in ids])
            rows.append(
                {
                    "kind": kind,
                    "label": label,
                    "n": len(ids),
                    "mae": mae(values, expected),
                    "max_abs": float(np.max(np.abs(values - expected))),
                }
            )
    return pd.DataFrame(rows, columns=["kind", "label", "n", "mae", "max_abs"])


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if not math.isfinite(float(value)) else float(value)
    if value is None or isinstance(value, str):
        return value
    return str(value)


def to_machine(report: Report) -> str:
    """JSON with sorted keys and no timestamps, so repeated runs give identical bytes."""
    payload = {
        "command": report.command,
        "summary": _plain(report.summary),
        "tables": {
            name: {"columns": [str(column) for column in table.columns], "rows": _plain(table.astype(object).values.tolist())}
            for name, table in report.tables.items()
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def from_machine(text: str) -> Report:
    payload = json.loads(text)
    tables = {
        name: pd.DataFrame(content["rows"], columns=content["columns"]) for name, content in payload["tables"].items()
    }
    return Report(command=payload["command"], tables=tables, summary=payload["summary"])


def render_table(report: Report) -> str:
    blocks = [f"# {report.command}"]
    if report.summary:
        blocks.append("\n".join(f"{key}: {_plain(value)}" for key, value in sorted(report.summary.items())))
    for name, table in report.tables.items():
        body = table.to_string(index=False) if len(table) else "(empty)"
        blocks.append(f"== {name} ==\n{body}")
    return "\n\n".join(blocks) + "\n"
