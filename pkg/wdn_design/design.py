"""Tank depth and elevation search over the nested flow solve."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.stats import qmc

from wdn_design.costing import (
    CostBreakdown,
    EconomicParams,
    FoundationParams,
    SupplyPipeSizingError,
    TankSizingError,
    WindParams,
    total_cost,
)
from wdn_design.hydraulics import ConvergenceError, FlowSolution, SolverOptions, solve_wfp
from wdn_design.network import LoopSet, Network
from wdn_design.validation import NetworkValidationError

logger = logging.getLogger(__name__)

COMPONENTS = ("pipeline", "tank_material", "tank_foundation", "pump_npv", "total")


class InfeasibleDesignError(RuntimeError):
    """No start reached a design meeting every pressure and window bound."""

    def __init__(self, message: str, candidate: "DesignSolution | None" = None):
        super().__init__(message)
        self.candidate = candidate


@dataclass(frozen=True)
class DesignVariables:
    levels: Dict[str, Tuple[float, float]]  # tank id -> (water depth h_r, height above ground h_b)

    def as_vector(self, tank_ids: Sequence[str]) -> np.ndarray:
        return np.array([value for tank_id in tank_ids for value in self.levels[tank_id]], dtype=float)

    @classmethod
    def from_vector(cls, tank_ids: Sequence[str], vector: Sequence[float]) -> "DesignVariables":
        return cls({tank_id: (float(vector[2 * i]), float(vector[2 * i + 1])) for i, tank_id in enumerate(tank_ids)})

    @classmethod
    def from_network(cls, network: Network) -> "DesignVariables":
        return cls({tank.id: (tank.water_depth, tank.height_above_ground) for tank in network.tanks})


@dataclass(frozen=True)
class DesignBounds:
    p_min: float = 10.0
    p_max: float = 30.0
    h_r_min: float = 0.25
    h_r_max: float = 40.0
    h_b_min: float = 0.0
    h_b_max: float = 39.5
    z_max: float | None = None
    pressure_tolerance: float = 1e-3

    def __post_init__(self) -> None:
        for low, high in (("p_min", "p_max"), ("h_r_min", "h_r_max"), ("h_b_min", "h_b_max")):
            if not getattr(self, low) < getattr(self, high):
                raise ValueError(f"Design bound {low} must be below {high}.")
        if self.h_r_min <= 0 or self.h_b_min < 0:
            raise ValueError("Design bounds need h_r_min > 0 and h_b_min >= 0.")

    @property
    def window(self) -> float:
        return self.h_b_max + self.h_r_max if self.z_max is None else self.z_max

    @classmethod
    def from_config(cls, section: Mapping[str, Any] | None) -> "DesignBounds":
        names = {item.name for item in fields(cls)}
        return cls(**{key: value for key, value in (section or {}).items() if key in names})


@dataclass(frozen=True)
class DesignOptions:
    starts_per_tank: int = 32
    max_starts: int = 256
    penalty_weight: float = 1e4
    penalty_growth: float = 10.0
    max_escalations: int = 4
    max_local_evaluations: int = 400
    seed: int = 7
    solver: SolverOptions = field(default_factory=SolverOptions)

    @classmethod
    def from_config(cls, section: Mapping[str, Any] | None, solver: SolverOptions | None = None) -> "DesignOptions":
        names = {item.name for item in fields(cls)} - {"solver"}
        values = {key: value for key, value in (section or {}).items() if key in names}
        return cls(solver=solver or SolverOptions(), **values)


@dataclass(frozen=True, eq=False)
class DesignEvaluation:
    variables: DesignVariables
    cost: float
    violations: np.ndarray
    margins: pd.Series
    breakdown: CostBreakdown | None = None
    solution: FlowSolution | None = None
    error: str | None = None

    @property
    def total_violation(self) -> float:
        return float(np.sum(self.violations))

    def feasible(self, tolerance: float) -> bool:
        return self.error is None and bool(np.all(self.violations <= tolerance))


@dataclass(frozen=True)
class StartTrace:
    index: int
    start: Tuple[float, ...]
    best_objective: float


@dataclass(frozen=True, eq=False)
class DesignSolution:
    variables: DesignVariables
    solution: FlowSolution
    breakdown: CostBreakdown
    margins: pd.Series
    economics: EconomicParams
    feasible: bool
    trace: Tuple[StartTrace, ...] = ()
    evaluations: int = 0
    failures: int = 0
    penalty_weight: float = 0.0

    @property
    def cost(self) -> float:
        return self.breakdown.total

    @classmethod
    def from_evaluation(cls, evaluation: DesignEvaluation, economics: EconomicParams, tolerance: float, **extra: Any):
        return cls(
            variables=evaluation.variables,
            solution=evaluation.solution,
            breakdown=evaluation.breakdown,
            margins=evaluation.margins,
            economics=economics,
            feasible=evaluation.feasible(tolerance),
            **extra,
        )


def _violations(network: Network, solution: FlowSolution, bounds: DesignBounds) -> Tuple[np.ndarray, pd.Series]:
    junction_ids = [node.id for node in network.junctions]
    pressures = solution.pressures.loc[junction_ids].to_numpy(dtype=float)
    low = np.maximum(bounds.p_min - pressures, 0.0)
    high = np.maximum(pressures - bounds.p_max, 0.0)
    window = np.array(
        [
            max(tank.height_above_ground + tank.water_depth - bounds.window, 0.0)
            + max(-(tank.height_above_ground + tank.water_depth), 0.0)
            for tank in network.tanks
        ],
        dtype=float,
    )
    margins = pd.Series(np.minimum(pressures - bounds.p_min, bounds.p_max - pressures), index=junction_ids, name="margin")
    return np.concatenate([low, high, window]), margins


def _failed_evaluation(
    network: Network, variables: DesignVariables, message: str, solution: FlowSolution | None
) -> DesignEvaluation:
    size = 2 * len(network.junctions) + len(network.tanks)
    return DesignEvaluation(
        variables=variables,
        cost=math.inf,
        violations=np.full(size, math.inf),
        margins=pd.Series(dtype=float, name="margin"),
        solution=solution,
        error=message,
    )


def evaluate_design(
    network: Network,
    loopset: LoopSet,
    variables: DesignVariables,
    econ: EconomicParams,
    wind: WindParams,
    foundation: FoundationParams,
    bounds: DesignBounds | None = None,
    options: SolverOptions | None = None,
    initial: np.ndarray | None = None,
) -> DesignEvaluation:
    """Cost and constraint violations with tank heads set from the design variables."""
    bounds = bounds or DesignBounds()
    designed = network.with_tank_levels(variables.levels)
    loops = loopset.refresh(designed)
    try:
        solution = solve_wfp(designed, loops, options, initial)
    except ConvergenceError as error:
        logger.warning("Design evaluation at %s did not converge: %s", variables.levels, error)
        return _failed_evaluation(designed, variables, str(error), error.solution)
    try:
        breakdown = total_cost(designed, solution, econ, wind, foundation)
    except (TankSizingError, SupplyPipeSizingError) as error:
        logger.warning("Design evaluation at %s cannot be costed: %s", variables.levels, error)
        return _failed_evaluation(designed, variables, str(error), solution)
    violations, margins = _violations(designed, solution, bounds)
    return DesignEvaluation(
        variables=variables,
        cost=breakdown.total,
        violations=violations,
        margins=margins,
        breakdown=breakdown,
        solution=solution,
    )


def start_points(lower: np.ndarray, upper: np.ndarray, options: DesignOptions) -> np.ndarray:
    """Scrambled Sobol points over the box; the count is rounded up to a power of two."""
    count = max(1, min(options.starts_per_tank * (lower.size // 2), options.max_starts))
    sampler = qmc.Sobol(d=lower.size, scramble=True, seed=options.seed)
    return qmc.scale(sampler.random_base2(m=math.ceil(math.log2(count))), lower, upper)


def _initial_simplex(start: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    steps = 0.05 * (upper - lower)
    simplex = [start]
    for axis in range(start.size):
        vertex = start.copy()
        vertex[axis] = start[axis] + steps[axis] if start[axis] + steps[axis] <= upper[axis] else start[axis] - steps[axis]
        simplex.append(vertex)
    return np.array(simplex)


def solve_dom(
    network: Network,
    loopset: LoopSet,
    bounds: DesignBounds,
    econ: EconomicParams,
    wind: WindParams,
    foundation: FoundationParams,
    options: DesignOptions | None = None,
    baseline: DesignVariables | None = None,
) -> DesignSolution:
    """Multi-start Nelder-Mead with an escalating exact penalty; returns the cheapest feasible point evaluated."""
    options = options or DesignOptions()
    tank_ids = [tank.id for tank in network.tanks]
    lower = np.tile([bounds.h_r_min, bounds.h_b_min], len(tank_ids))
    upper = np.tile([bounds.h_r_max, bounds.h_b_max], len(tank_ids))
    starts: List[np.ndarray] = []
    if baseline is not None:
        starts.append(np.clip(baseline.as_vector(tank_ids), lower, upper))
    starts.extend(start_points(lower, upper, options))

    cache: Dict[Tuple[float, ...], DesignEvaluation] = {}
    state: Dict[str, Any] = {"incumbent": None, "least": None, "warm": None, "failures": 0}
    weight = options.penalty_weight

    def evaluate(point: np.ndarray) -> DesignEvaluation:
        key = tuple(float(value) for value in point)
        if key in cache:
            return cache[key]
        evaluation = evaluate_design(
            network,
            loopset,
            DesignVariables.from_vector(tank_ids, point),
            econ,
            wind,
            foundation,
            bounds,
            options.solver,
            state["warm"],
        )
        cache[key] = evaluation
        if evaluation.error is not None:
            state["failures"] += 1
            return evaluation
        if state["warm"] is None:
            state["warm"] = evaluation.solution.flows.to_numpy()
        incumbent = state["incumbent"]
        if evaluation.feasible(bounds.pressure_tolerance) and (incumbent is None or evaluation.cost < incumbent.cost):
            state["incumbent"] = evaluation
        least = state["least"]
        if least is None or evaluation.total_violation < least.total_violation:
            state["least"] = evaluation
        return evaluation

    if baseline is not None:
        evaluate(starts[0])

    def objective(x: np.ndarray) -> float:
        clipped = np.clip(x, lower, upper)
        evaluation = evaluate(clipped)
        if evaluation.error is not None:
            return math.inf
        return evaluation.cost + weight * (evaluation.total_violation + float(np.sum(np.abs(x - clipped))))

    trace: List[StartTrace] = []
    for round_index in range(options.max_escalations + 1):
        trace = []
        logger.info("Design round %d: %d starts, penalty weight %.1e", round_index + 1, len(starts), weight)
        for index, start in enumerate(starts):
            result = minimize(
                objective,
                start,
                method="Nelder-Mead",
                options={
                    "maxfev": options.max_local_evaluations,
                    "xatol": 1e-3,
                    "fatol": 1.0,
                    "initial_simplex": _initial_simplex(np.asarray(start, dtype=float), lower, upper),
                },
            )
            trace.append(StartTrace(index=index, start=tuple(float(v) for v in start), best_objective=float(result.fun)))
        if state["incumbent"] is not None:
            break
        weight *= options.penalty_growth

    incumbent = state["incumbent"]
    extra = {"trace": tuple(trace), "evaluations": len(cache), "failures": state["failures"], "penalty_weight": weight}
    if incumbent is None:
        least = state["least"]
        candidate = (
            DesignSolution.from_evaluation(least, econ, bounds.pressure_tolerance, **extra) if least is not None else None
        )
        raise InfeasibleDesignError(
            f"No feasible design after {options.max_escalations} penalty escalations "
            f"({len(cache)} evaluations, {state['failures']} failed solves).",
            candidate,
        )
    logger.info("Design incumbent %s at %.2f USD", incumbent.variables.levels, incumbent.cost)
    return DesignSolution.from_evaluation(incumbent, econ, bounds.pressure_tolerance, **extra)


def compare_designs(baseline: DesignSolution, optimized: DesignSolution) -> pd.DataFrame:
    """Percent reduction per component; positive means the optimized design is cheaper."""
    if baseline.economics != optimized.economics:
        raise NetworkValidationError("Cannot compare designs evaluated under different economics.")
    if list(baseline.breakdown.pipe_costs.index) != list(optimized.breakdown.pipe_costs.index) or set(
        baseline.variables.levels
    ) != set(optimized.variables.levels):
        raise NetworkValidationError("Cannot compare designs of different networks.")
    before = baseline.breakdown.components()
    after = optimized.breakdown.components()
    rows = []
    for component in COMPONENTS:
        if before[component] == 0:
            delta = 0.0 if after[component] == 0 else float("nan")
        else:
            delta = 100.0 * (before[component] - after[component]) / before[component]
        rows.append({"component": component, "baseline": before[component], "optimized": after[component], "delta_percent": delta})
    return pd.DataFrame(rows, columns=["component", "baseline", "optimized", "delta_percent"])
