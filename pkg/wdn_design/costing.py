"""Pump energy, tank structure and pipeline cost models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Any, Mapping, Sequence, Tuple

import pandas as pd
from numpy.polynomial import polynomial

from wdn_design import config
from wdn_design.hydraulics import FlowSolution, friction_factor, resistance_dw, resistance_hw, reynolds
from wdn_design.network import Network, Node, Pump
from wdn_design.validation import NetworkValidationError

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
MAX_PIPELINE_DEGREE = 7
UNUSED_ECONOMICS = ("operational_cost_rate", "fill_duration")


class SupplyPipeSizingError(ValueError):
    """No catalog diameter keeps the supply velocity under the limit."""


class TankSizingError(NetworkValidationError):
    """A tank without a declared volume does not supply the network."""


def _known(cls, mapping: Mapping[str, Any] | None) -> dict:
    names = {item.name for item in fields(cls)}
    return {key: value for key, value in (mapping or {}).items() if key in names}


@dataclass(frozen=True)
class EconomicParams:
    energy_price: float = 0.016
    interest_rate: float = 0.12
    energy_escalation: float = 0.06
    lifespan: float = 25
    material_unit_cost: float = 60.0
    pipeline_coefficients: Tuple[float, ...] = tuple(config.DEFAULTS["economics"]["pipeline_coefficients"])
    supply_velocity_max: float = 2.0
    supply_pipe_length: float = 500.0
    pump_depth_below_base: float = 5.0
    diameter_catalog_mm: Tuple[float, ...] = tuple(config.DEFAULTS["economics"]["diameter_catalog_mm"])
    operational_cost_rate: float | None = None
    fill_duration: float | None = None

    def __post_init__(self) -> None:
        if self.lifespan < 1:
            raise ValueError(f"Lifespan must be at least 1 year, got {self.lifespan}.")
        if self.energy_price < 0 or self.material_unit_cost < 0:
            raise ValueError("Energy price and tank material unit cost must be nonnegative.")
        if len(self.pipeline_coefficients) > MAX_PIPELINE_DEGREE + 1:
            raise ValueError(
                f"Pipeline cost polynomial has degree {len(self.pipeline_coefficients) - 1}; at most {MAX_PIPELINE_DEGREE} allowed."
            )
        if list(self.diameter_catalog_mm) != sorted(self.diameter_catalog_mm) or not self.diameter_catalog_mm:
            raise ValueError("Supply pipe catalog must be a nonempty ascending list.")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any] | None) -> "EconomicParams":
        values = _known(cls, mapping)
        for key in ("pipeline_coefficients", "diameter_catalog_mm"):
            if key in values:
                values[key] = tuple(float(item) for item in values[key])
        for key in UNUSED_ECONOMICS:
            if values.get(key) is not None:
                logger.warning("Economic parameter %s=%s is accepted but not used by any cost term", key, values[key])
        return cls(**values)


@dataclass(frozen=True)
class WindParams:
    speed: float = 40.0
    exponent: float = 0.3

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError(f"Wind speed must be nonnegative, got {self.speed}.")
        if not self.exponent > -1:
            raise ValueError(f"Wind profile exponent must exceed -1, got {self.exponent}.")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any] | None) -> "WindParams":
        return cls(**_known(cls, mapping))


@dataclass(frozen=True)
class FoundationParams:
    alpha1: float = 15.41
    beta1: float = 1.0
    alpha2: float = 9.0
    beta2: float = 1.0
    alpha3: float = 20.0
    beta3: float = 1.0

    def __post_init__(self) -> None:
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("Foundation alphas must be nonnegative.")
        if not min(self.beta1, self.beta2, self.beta3) > 0:
            raise ValueError("Foundation betas must be positive.")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any] | None) -> "FoundationParams":
        return cls(**_known(cls, mapping))


@dataclass(frozen=True)
class TankCost:
    tank: str
    volume: float
    diameter: float
    water_depth: float
    height_above_ground: float
    base_elevation: float
    wind_force: float
    wind_moment: float
    material: float
    foundation: float

    @property
    def total(self) -> float:
        return self.material + self.foundation

    @property
    def lever_arm(self) -> float:
        return self.wind_moment / self.wind_force if self.wind_force > 0 else float("nan")


@dataclass(frozen=True)
class PumpState:
    tank: str
    outflow: float
    flow: float
    supply_diameter: float
    resistance: float
    static_head: float
    pump_head: float
    power: float
    energy: float
    daily_cost: float
    npv: float


@dataclass(frozen=True, eq=False)
class CostBreakdown:
    pipeline: float
    tank_material: float
    tank_foundation: float
    pump_npv: float
    pipe_costs: pd.Series
    tanks: Tuple[TankCost, ...] = ()
    pumps: Tuple[PumpState, ...] = ()

    @property
    def total(self) -> float:
        return self.pipeline + self.tank_material + self.tank_foundation + self.pump_npv

    def components(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "tank_material": self.tank_material,
            "tank_foundation": self.tank_foundation,
            "pump_npv": self.pump_npv,
            "total": self.total,
        }


def pump_flow(outflow: float, hour_factor: float, network_hours: float, operating_hours: float) -> float:
    if not hour_factor > 0 or not 0 < operating_hours <= 24:
        raise ValueError("Pump flow needs hour_factor > 0 and operating hours in (0, 24].")
    return outflow / hour_factor * network_hours / operating_hours


def pump_head(
    water_depth: float, base_elevation: float, pump_elevation: float, resistance: float, exponent: float, flow: float
) -> Tuple[float, float]:
    """Static lift to the tank bottom plus water depth, and total head with supply losses."""
    static = water_depth + (base_elevation - pump_elevation)
    return static, static + resistance * flow * abs(flow) ** (exponent - 1.0)


def pump_energy_cost(
    head: float, flow: float, specific_weight: float, daily_hours: float, efficiency: float, energy_price: float
) -> Tuple[float, float, float]:
    """Power in kW, energy in kWh/day and cost in USD/day."""
    if not 0 < efficiency <= 1:
        raise ValueError(f"Pump efficiency {efficiency} is outside (0, 1].")
    power = specific_weight * flow * head / (1000.0 * efficiency)
    energy = power * daily_hours
    return power, energy, energy_price * energy


def npv_factor(interest_rate: float, escalation: float, lifespan: float) -> float:
    if lifespan < 1:
        raise ValueError(f"Lifespan must be at least 1 year, got {lifespan}.")
    if abs(interest_rate - escalation) < 1e-12:
        return lifespan / (1.0 + interest_rate)
    # expm1/log1p keep the factor continuous as the two rates converge
    growth = lifespan * (math.log1p(escalation) - math.log1p(interest_rate))
    return -math.expm1(growth) / (interest_rate - escalation)


def pump_npv(daily_cost: float, factor: float) -> float:
    return factor * daily_cost * 365.0


def tank_volume(demand: float, day_factor: float) -> float:
    if demand < 0:
        raise ValueError(f"Tank demand must be nonnegative, got {demand}.")
    return day_factor * demand * SECONDS_PER_DAY / 3.0


def tank_diameter(volume: float, water_depth: float) -> float:
    if not volume > 0 or not water_depth > 0:
        raise ValueError("Tank diameter needs positive volume and water depth.")
    return math.sqrt(4.0 * volume / (math.pi * water_depth))


def tank_material_cost(unit_cost: float, diameter: float, water_depth: float) -> float:
    return unit_cost * math.pi * diameter * (diameter**2 / 2.0 + water_depth)


def wind_coefficient(speed: float, exponent: float) -> float:
    return 0.613 * 0.75**2 * speed**2 / 10.0**exponent


def _profile_integral(height_above_ground: float, water_depth: float, power: float) -> float:
    return ((height_above_ground + water_depth) ** power - height_above_ground**power) / power


def wind_moment(diameter: float, coefficient: float, exponent: float, height_above_ground: float, water_depth: float) -> float:
    """Overturning moment at ground level, kN m."""
    return 0.5 * math.pi * diameter * coefficient * _profile_integral(height_above_ground, water_depth, exponent + 2) / 1000.0


def wind_force(diameter: float, coefficient: float, exponent: float, height_above_ground: float, water_depth: float) -> float:
    """Total lateral wind force, kN."""
    return 0.5 * math.pi * diameter * coefficient * _profile_integral(height_above_ground, water_depth, exponent + 1) / 1000.0


def foundation_cost(volume: float, moment: float, force: float, params: FoundationParams) -> float:
    if min(volume, moment, force) < 0:
        raise ValueError("Foundation strengths must be nonnegative.")
    return (
        params.alpha1 * volume**params.beta1
        + params.alpha2 * moment**params.beta2
        + params.alpha3 * force**params.beta3
    )


def tank_total_cost(
    volume: float,
    base_elevation: float,
    height_above_ground: float,
    water_depth: float,
    econ: EconomicParams,
    wind: WindParams,
    foundation: FoundationParams,
    tank_id: str = "",
) -> TankCost:
    diameter = tank_diameter(volume, water_depth)
    coefficient = wind_coefficient(wind.speed, wind.exponent)
    moment = wind_moment(diameter, coefficient, wind.exponent, height_above_ground, water_depth)
    force = wind_force(diameter, coefficient, wind.exponent, height_above_ground, water_depth)
    return TankCost(
        tank=tank_id,
        volume=volume,
        diameter=diameter,
        water_depth=water_depth,
        height_above_ground=height_above_ground,
        base_elevation=base_elevation,
        wind_force=force,
        wind_moment=moment,
        material=tank_material_cost(econ.material_unit_cost, diameter, water_depth),
        foundation=foundation_cost(volume, moment, force, foundation),
    )


def pipeline_cost(diameter_mm: float, coefficients: Sequence[float]) -> float:
    """Unclamped cost per meter; coefficients are ascending powers of the diameter in mm."""
    if not diameter_mm > 0:
        raise ValueError(f"Pipe diameter must be positive, got {diameter_mm} mm.")
    return float(polynomial.polyval(diameter_mm, list(coefficients) or [0.0]))


def network_pipeline_cost(network: Network, coefficients: Sequence[float]) -> pd.Series:
    costs = {}
    for pipe in network.pipes:
        unit = pipeline_cost(pipe.diameter * 1000.0, coefficients)
        if unit < 0:
            logger.warning("Pipeline cost polynomial is negative (%.3f USD/m) for pipe %s; clamped to 0", unit, pipe.id)
            unit = 0.0
        costs[pipe.id] = pipe.length * unit
    return pd.Series(costs, name="usd", dtype=float)


def supply_pipe_diameter(flow: float, velocity_max: float, catalog_mm: Sequence[float]) -> float:
    """Smallest catalog diameter (m) keeping the supply velocity at or below velocity_max."""
    if not catalog_mm:
        raise ValueError("Supply pipe catalog is empty.")
    for size in catalog_mm:
        diameter = size / 1000.0
        if 4.0 * abs(flow) / (math.pi * diameter**2) <= velocity_max:
            return diameter
    raise SupplyPipeSizingError(
        f"No catalog diameter up to {catalog_mm[-1]} mm keeps {flow * 1000:.2f} L/s under {velocity_max} m/s."
    )


def pump_resistance(network: Network, pump: Pump, flow: float, diameter: float) -> float:
    """Declared resistance, or one derived from the supply pipe and the tank's first adjacent pipe roughness."""
    if pump.resistance is not None:
        return pump.resistance
    adjacent = network.adjacent_pipes(pump.tank_id)
    if not adjacent:
        raise NetworkValidationError(f"Tank {pump.tank_id} has no pipes to take a supply roughness from.")
    roughness = adjacent[0].roughness
    if network.headloss_model == "HW":
        return resistance_hw(pump.supply_length, roughness, diameter)
    re = reynolds(max(abs(flow), 1e-6), diameter, network.viscosity)
    return resistance_dw(pump.supply_length, diameter, friction_factor(re, roughness, diameter), network.gravity)


def pump_state(network: Network, tank: Node, outflow: float, econ: EconomicParams) -> PumpState:
    pump = network.pump_for(tank.id)
    if pump is None:
        raise NetworkValidationError(f"Tank {tank.id} has no pump; every tank needs one for costing.")
    flow = pump_flow(max(outflow, 0.0), network.hour_factor, network.network_hours, pump.operating_hours)
    diameter = pump.supply_diameter or supply_pipe_diameter(flow, econ.supply_velocity_max, econ.diameter_catalog_mm)
    resistance = pump_resistance(network, pump, flow, diameter)
    static, head = pump_head(tank.water_depth, tank.base_elevation, pump.elevation, resistance, network.exponent, flow)
    power, energy, daily_cost = pump_energy_cost(
        head, flow, network.specific_weight, pump.daily_hours, pump.efficiency, econ.energy_price
    )
    factor = npv_factor(econ.interest_rate, econ.energy_escalation, econ.lifespan)
    return PumpState(
        tank=tank.id,
        outflow=outflow,
        flow=flow,
        supply_diameter=diameter,
        resistance=resistance,
        static_head=static,
        pump_head=head,
        power=power,
        energy=energy,
        daily_cost=daily_cost,
        npv=pump_npv(daily_cost, factor),
    )


def total_cost(
    network: Network,
    solution: FlowSolution,
    econ: EconomicParams,
    wind: WindParams,
    foundation: FoundationParams,
    levels: Mapping[str, Tuple[float, float]] | None = None,
) -> CostBreakdown:
    """Pipeline, tank and pump NPV costs for a solved network, itemized per pipe and tank."""
    if levels:
        network = network.with_tank_levels(levels)
    pipe_costs = network_pipeline_cost(network, econ.pipeline_coefficients)
    pumps, tanks = [], []
    for tank in network.tanks:
        outflow = float(solution.tank_outflows[tank.id])
        pumps.append(pump_state(network, tank, outflow, econ))
        volume = tank.volume
        if volume is None:
            if not outflow > 0:
                raise TankSizingError(
                    f"Tank {tank.id} takes in {-outflow * 1000:.3f} L/s from the network, so its volume cannot be "
                    "sized from its outflow; declare a volume in [TANKS]."
                )
            volume = tank_volume(outflow, network.day_factor)
        tanks.append(
            tank_total_cost(
                volume, tank.base_elevation, tank.height_above_ground, tank.water_depth, econ, wind, foundation, tank.id
            )
        )
    return CostBreakdown(
        pipeline=float(pipe_costs.sum()),
        tank_material=float(sum(item.material for item in tanks)),
        tank_foundation=float(sum(item.foundation for item in tanks)),
        pump_npv=float(sum(item.npv for item in pumps)),
        pipe_costs=pipe_costs,
        tanks=tuple(tanks),
        pumps=tuple(pumps),
    )
