"""Configuration loader and shipped defaults."""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Dict, Mapping

import yaml

DEFAULTS: Dict[str, Any] = {
    "solver": {
        "tol_mass": 1e-9,
        "tol_energy": 1e-7,
        "max_iterations": 200,
        "smoothing_threshold": 1e-6,
        "initial_flow_fraction": 0.10,
        "backtrack_factor": 0.5,
        "max_backtracks": 30,
    },
    "design": {
        "p_min": 10.0,
        "p_max": 30.0,
        "h_r_min": 0.25,
        "h_r_max": 40.0,
        "h_b_min": 0.0,
        "h_b_max": 39.5,
        "z_max": None,
        "pressure_tolerance": 1e-3,
        "starts_per_tank": 32,
        "max_starts": 256,
        "penalty_weight": 1e4,
        "penalty_growth": 10.0,
        "max_escalations": 4,
        "max_local_evaluations": 400,
        "seed": 7,
    },
    "economics": {
        "energy_price": 0.016,
        "interest_rate": 0.12,
        "energy_escalation": 0.06,
        "lifespan": 25,
        "material_unit_cost": 60.0,
        # ascending powers of D in mm
        "pipeline_coefficients": [4.1, -0.187, 5.76e-3, -4.74e-5, 1.85e-7, -3.32e-10, 2.27e-13],
        "supply_velocity_max": 2.0,
        "supply_pipe_length": 500.0,
        "pump_depth_below_base": 5.0,
        "diameter_catalog_mm": [
            40, 50, 63, 75, 90, 100, 110, 125, 150, 160, 175, 200,
            225, 250, 300, 350, 400, 450, 500, 600, 700, 800, 900, 1000,
        ],
    },
    "wind": {
        "speed": 40.0,
        "exponent": 0.3,
    },
    "foundation": {
        "alpha1": 15.41,
        "beta1": 1.0,
        "alpha2": 9.0,
        "beta2": 1.0,
        "alpha3": 20.0,
        "beta3": 1.0,
    },
    "output": {
        "dir": None,
        "manifest": None,
    },
}


def load_config(path: str | Path) -> Dict[str, Any]:
    """Load a YAML configuration file."""
    with Path(path).open("r", encoding="utf-8") as handle:
        return yaml.safe_load(handle) or {}


def merge_config(base: Mapping[str, Any], override: Mapping[str, Any] | None) -> Dict[str, Any]:
    merged = copy.deepcopy(dict(base))
    for key, value in (override or {}).items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_config(path: str | Path | None = None) -> Dict[str, Any]:
    """Defaults overlaid with an optional YAML file."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    return merge_config(DEFAULTS, load_config(path))
