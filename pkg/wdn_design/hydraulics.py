"""Friction models, residual assembly and the steady-state flow solver."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, fields
from typing import Any, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from wdn_design.network import GRAVITY, LoopSet, Network, incidence_matrix

logger = logging.getLogger(__name__)

EXPECTED_SUPPLY_RTOL = 0.01
CLOSURE_FACTOR = 10.0


class ConvergenceError(RuntimeError):
    """Newton iteration failed; carries the best iterate found."""

    def __init__(self, message: str, solution: "FlowSolution | None" = None, suspect_pipes: Sequence[str] = ()):
        super().__init__(message)
        self.solution = solution
        self.suspect_pipes = tuple(suspect_pipes)
        self.report: Any = None  # diagnostics attached by the command layer


@dataclass(frozen=True)
class SolverOptions:
    tol_mass: float = 1e-9
    tol_energy: float = 1e-7
    max_iterations: int = 200
    smoothing_threshold: float = 1e-6
    initial_flow_fraction: float = 0.10
    backtrack_factor: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self) -> None:
        for item in fields(self):
            value = getattr(self, item.name)
            if not value > 0:
                raise ValueError(f"Solver option {item.name} must be positive, got {value}.")
        if not self.backtrack_factor < 1:
            raise ValueError(f"Solver option backtrack_factor must be below 1, got {self.backtrack_factor}.")

    @classmethod
    def from_config(cls, section: Mapping[str, Any] | None) -> "SolverOptions":
        names = {item.name for item in fields(cls)}
        return cls(**{key: value for key, value in (section or {}).items() if key in names})


@dataclass(frozen=True)
class PipeHydraulics:
    resistance: float
    exponent: float
    friction_factor: float | None = None
    reynolds: float | None = None


@dataclass(frozen=True, eq=False)
class FlowSolution:
    flows: pd.Series  # m3/s, positive along declared from -> to
    heads: pd.Series
    pressures: pd.Series
    tank_outflows: pd.Series
    pipe_states: Tuple[PipeHydraulics, ...]
    mass_residual: float
    energy_residual: float
    iterations: int
    converged: bool
    closure: float = 0.0


def reynolds(flow, diameter, viscosity):
    return 4.0 * np.abs(flow) / (math.pi * diameter * viscosity)


def friction_factor(re, roughness, diameter):
    """Explicit friction factor valid across laminar, transitional and turbulent flow."""
    re = np.asarray(re, dtype=float)
    if np.any(re <= 0):
        raise ValueError("Friction factor needs a positive Reynolds number.")
    bracket = np.log(roughness / (3.7 * diameter) + 5.74 / re**0.9) - 2500.0 / re
    value = ((64.0 / re) ** 8 + 9.5 * bracket**-16.0) ** 0.125
    return float(value) if value.ndim == 0 else value


def resistance_hw(length, coefficient, diameter):
    return 10.67 * length / (coefficient**1.85 * diameter**4.87)


def resistance_dw(length, diameter, factor, gravity: float = GRAVITY):
    return 8.0 * factor * length / (diameter**5 * math.pi**2 * gravity)


def headloss(resistance, exponent, flow):
    return resistance * flow * np.abs(flow) ** (exponent - 1.0)


def headloss_derivative(resistance, exponent, flow, smoothing_threshold):
    # Constant floor inside the smoothing band keeps the Jacobian nonsingular at zero flow.
    return exponent * resistance * np.maximum(np.abs(flow), smoothing_threshold) ** (exponent - 1.0)


def _pipe_arrays(network: Network) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.array([pipe.length for pipe in network.pipes], dtype=float)
    diameters = np.array([pipe.diameter for pipe in network.pipes], dtype=float)
    roughness = np.array([pipe.roughness for pipe in network.pipes], dtype=float)
    return lengths, diameters, roughness


def pipe_hydraulics(network: Network, q: np.ndarray, smoothing_threshold: float = 1e-6) -> Tuple[PipeHydraulics, ...]:
    """Resistance per pipe at flows q; DW friction factors use Re at max(|q|, threshold)."""
    lengths, diameters, roughness = _pipe_arrays(network)
    exponent = network.exponent
    if network.headloss_model == "HW":
        k = resistance_hw(lengths, roughness, diameters)
        return tuple(PipeHydraulics(resistance=float(value), exponent=exponent) for value in k)
    re = reynolds(np.maximum(np.abs(q), smoothing_threshold), diameters, network.viscosity)
    f = np.atleast_1d(friction_factor(re, roughness, diameters)) if len(re) else np.zeros(0)
    k = resistance_dw(lengths, diameters, f, network.gravity)
    return tuple(
        PipeHydraulics(resistance=float(k[i]), exponent=exponent, friction_factor=float(f[i]), reynolds=float(re[i]))
        for i in range(len(k))
    )


def _resistances(network: Network, q: np.ndarray, smoothing_threshold: float) -> np.ndarray:
    return np.array([state.resistance for state in pipe_hydraulics(network, q, smoothing_threshold)], dtype=float)


def junction_demands(network: Network) -> np.ndarray:
    return np.array([node.demand for node in network.junctions], dtype=float)


def assemble_residuals(
    network: Network, loopset: LoopSet, q: np.ndarray, smoothing_threshold: float = 1e-6
) -> np.ndarray:
    """Junction mass rows (m3/s) followed by loop energy rows (m)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (len(network.pipes),):
        raise ValueError(f"Expected {len(network.pipes)} pipe flows, got shape {q.shape}.")
    k = _resistances(network, q, smoothing_threshold)
    mass = loopset.junction_incidence @ q - junction_demands(network)
    energy = loopset.loop_incidence @ headloss(k, network.exponent, q) - loopset.head_differences
    return np.concatenate([mass, energy])


def jacobian(network: Network, loopset: LoopSet, q: np.ndarray, smoothing_threshold: float = 1e-6) -> sp.csc_matrix:
    """Residual Jacobian with friction factors frozen at q."""
    k = _resistances(network, q, smoothing_threshold)
    derivative = headloss_derivative(k, network.exponent, q, smoothing_threshold)
    return sp.vstack([loopset.junction_incidence, loopset.loop_incidence @ sp.diags(derivative)]).tocsc()


def _split_norms(residual: np.ndarray, junction_count: int) -> Tuple[float, float]:
    mass = residual[:junction_count]
    energy = residual[junction_count:]
    return (
        float(np.max(np.abs(mass))) if mass.size else 0.0,
        float(np.max(np.abs(energy))) if energy.size else 0.0,
    )


def initial_flows(network: Network, options: SolverOptions) -> np.ndarray:
    total = network.total_demand
    start = options.initial_flow_fraction * total if total > 0 else 1e-3
    return np.full(len(network.pipes), start)


def solve_wfp(
    network: Network,
    loopset: LoopSet,
    options: SolverOptions | None = None,
    initial: np.ndarray | None = None,
) -> FlowSolution:
    """Damped Newton on the square mass/energy system."""
    options = options or SolverOptions()
    threshold = options.smoothing_threshold
    junction_count = len(network.junctions)
    q = initial_flows(network, options) if initial is None else np.array(initial, dtype=float)
    residual = assemble_residuals(network, loopset, q, threshold)
    best_q, best_norm = q.copy(), float(np.linalg.norm(residual))
    iterations = 0
    while True:
        mass_norm, energy_norm = _split_norms(residual, junction_count)
        if mass_norm <= options.tol_mass and energy_norm <= options.tol_energy:
            logger.info(
                "Flow solve converged in %d iterations (mass %.2e m3/s, energy %.2e m)", iterations, mass_norm, energy_norm
            )
            solution = _build_solution(network, loopset, q, options, iterations, True)
            if solution.closure > CLOSURE_FACTOR * options.tol_energy:
                raise ConvergenceError(
                    f"Node heads depend on the path taken: closure {solution.closure:.3e} m exceeds "
                    f"{CLOSURE_FACTOR * options.tol_energy:.1e} m; the loop set does not span every cycle.",
                    solution,
                )
            return solution
        if iterations >= options.max_iterations:
            break
        matrix = jacobian(network, loopset, q, threshold)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            step = np.atleast_1d(spsolve(matrix, -residual))
        if not np.all(np.isfinite(step)):
            k = _resistances(network, q, threshold)
            suspects = [pipe.id for pipe, value in zip(network.pipes, k) if value == 0]
            solution = _build_solution(network, loopset, best_q, options, iterations, False)
            raise ConvergenceError(f"Singular Jacobian at iteration {iterations}; suspect pipes {suspects}.", solution, suspects)
        current = float(np.linalg.norm(residual))
        scale = 1.0
        improved = False
        for _ in range(options.max_backtracks + 1):
            trial = q + scale * step
            trial_residual = assemble_residuals(network, loopset, trial, threshold)
            trial_norm = float(np.linalg.norm(trial_residual))
            if trial_norm < current:
                improved = True
                break
            scale *= options.backtrack_factor
        if not improved:
            solution = _build_solution(network, loopset, best_q, options, iterations, False)
            raise ConvergenceError(
                f"Line search found no decrease after {options.max_backtracks} backtracks at iteration {iterations} "
                f"(mass {solution.mass_residual:.2e} m3/s, energy {solution.energy_residual:.2e} m).",
                solution,
            )
        q, residual = trial, trial_residual
        iterations += 1
        logger.debug("Newton iteration %d: residual %.3e, step %.3e", iterations, trial_norm, scale)
        if trial_norm < best_norm:
            best_q, best_norm = q.copy(), trial_norm
    solution = _build_solution(network, loopset, best_q, options, iterations, False)
    raise ConvergenceError(
        f"No convergence after {options.max_iterations} iterations "
        f"(mass {solution.mass_residual:.2e} m3/s, energy {solution.energy_residual:.2e} m).",
        solution,
    )


def _tree_heads(network: Network, loopset: LoopSet, drops: np.ndarray) -> dict:
    tree = loopset.tree
    heads = {tree.root: network.node(tree.root).head}
    for node_id in tree.order[1:]:
        parent, pipe_id, sign = tree.parent[node_id]
        heads[node_id] = heads[parent] - sign * drops[network.pipe_index[pipe_id]]
    return heads


def _drops(network: Network, q: np.ndarray, smoothing_threshold: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return headloss(_resistances(network, q, smoothing_threshold), network.exponent, q)


def head_closure(network: Network, loopset: LoopSet, q: np.ndarray, smoothing_threshold: float = 1e-6) -> float:
    """Largest mismatch between tree-propagated heads and every non-tree pipe or fixed tank head."""
    drops = _drops(network, q, smoothing_threshold)
    heads = _tree_heads(network, loopset, drops)
    tree_pipes = loopset.tree.pipes
    gaps = [
        abs(heads[pipe.from_node] - heads[pipe.to_node] - drops[position])
        for position, pipe in enumerate(network.pipes)
        if pipe.id not in tree_pipes
    ]
    gaps += [abs(heads[tank.id] - tank.head) for tank in network.tanks]
    return float(max(gaps, default=0.0))


def node_heads(
    network: Network,
    loopset: LoopSet,
    q: np.ndarray,
    smoothing_threshold: float = 1e-6,
) -> Tuple[pd.Series, pd.Series]:
    """Tree-propagated heads and pressures; tanks keep their fixed heads."""
    drops = _drops(network, q, smoothing_threshold)
    heads = _tree_heads(network, loopset, drops)
    for tank in network.tanks:
        heads[tank.id] = tank.head
    ids = [node.id for node in network.nodes]
    head_series = pd.Series([heads[node_id] for node_id in ids], index=ids, name="head")
    elevations = pd.Series([node.elevation for node in network.nodes], index=ids)
    return head_series, (head_series - elevations).rename("pressure")


def tank_outflows(network: Network, q: np.ndarray) -> pd.Series:
    balance = -(incidence_matrix(network) @ np.asarray(q, dtype=float))
    ids = [tank.id for tank in network.tanks]
    return pd.Series([balance[network.node_index[tank_id]] for tank_id in ids], index=ids, name="outflow")


def _build_solution(
    network: Network, loopset: LoopSet, q: np.ndarray, options: SolverOptions, iterations: int, converged: bool
) -> FlowSolution:
    residual = assemble_residuals(network, loopset, q, options.smoothing_threshold)
    mass_norm, energy_norm = _split_norms(residual, len(network.junctions))
    heads, pressures = node_heads(network, loopset, q, options.smoothing_threshold)
    outflows = tank_outflows(network, q)
    for tank in network.tanks:
        expected = tank.expected_supply
        if converged and expected is not None and abs(outflows[tank.id] - expected) > EXPECTED_SUPPLY_RTOL * abs(expected):
            logger.warning(
                "Tank %s supplies %.4f L/s, declared %.4f L/s", tank.id, outflows[tank.id] * 1000, expected * 1000
            )
    return FlowSolution(
        flows=pd.Series(q, index=network.pipe_ids, name="flow"),
        heads=heads,
        pressures=pressures,
        tank_outflows=outflows,
        pipe_states=pipe_hydraulics(network, q, options.smoothing_threshold),
        mass_residual=mass_norm,
        energy_residual=energy_norm,
        iterations=iterations,
        converged=converged,
        closure=head_closure(network, loopset, q, options.smoothing_threshold),
    )


def mae(modeled: Sequence[float], reference: Sequence[float]) -> float:
    modeled = np.asarray(modeled, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if modeled.shape != reference.shape:
        raise ValueError(f"MAE needs equal lengths, got {modeled.size} and {reference.size}.")
    if modeled.size == 0:
        raise ValueError("MAE needs at least one value.")
    return float(np.mean(np.abs(modeled - reference)))
