"""Network data model, incidence matrices and loop sets."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.sparse as sp

from wdn_design import validation
from wdn_design.validation import NetworkValidationError

GRAVITY = 9.80665
HEADLOSS_EXPONENTS = {"HW": 1.85, "DW": 2.0}
JUNCTION = "junction"
TANK = "tank"


def natural_key(identifier: str) -> Tuple[Any, ...]:
    """Sort key that orders "2" before "10"."""
    return tuple(int(part) if part.isdigit() else part for part in re.split(r"(\d+)", identifier))


@dataclass(frozen=True)
class Node:
    id: str
    elevation: float
    kind: str = JUNCTION
    demand: float = 0.0
    water_depth: float = 0.0
    height_above_ground: float = 0.0
    volume: float | None = None
    expected_supply: float | None = None

    @property
    def is_tank(self) -> bool:
        return self.kind == TANK

    @property
    def base_elevation(self) -> float:
        return self.elevation + self.height_above_ground

    @property
    def head(self) -> float:
        """Fixed head of a tank; junction heads come from a solve."""
        if not self.is_tank:
            raise AttributeError(f"Junction {self.id} has no fixed head.")
        return self.elevation + self.height_above_ground + self.water_depth


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    length: float
    diameter: float
    roughness: float  # HW coefficient C, or DW rugosity in m


@dataclass(frozen=True)
class Pump:
    tank_id: str
    elevation: float
    supply_length: float
    daily_hours: float
    efficiency: float
    operating_hours: float
    supply_diameter: float | None = None
    resistance: float | None = None


@dataclass(frozen=True)
class Network:
    nodes: Tuple[Node, ...]
    pipes: Tuple[Pipe, ...]
    pumps: Tuple[Pump, ...] = ()
    headloss_model: str = "HW"
    viscosity: float = 1e-6
    density: float = 1000.0
    gravity: float = GRAVITY
    specific_weight: float = 9810.0
    day_factor: float = 1.2
    hour_factor: float = 1.5
    network_hours: float = 24.0

    @cached_property
    def node_index(self) -> Dict[str, int]:
        return {node.id: position for position, node in enumerate(self.nodes)}

    @cached_property
    def pipe_index(self) -> Dict[str, int]:
        return {pipe.id: position for position, pipe in enumerate(self.pipes)}

    @cached_property
    def junctions(self) -> Tuple[Node, ...]:
        return tuple(node for node in self.nodes if not node.is_tank)

    @cached_property
    def tanks(self) -> Tuple[Node, ...]:
        return tuple(sorted((node for node in self.nodes if node.is_tank), key=lambda node: natural_key(node.id)))

    @property
    def pipe_ids(self) -> List[str]:
        return [pipe.id for pipe in self.pipes]

    @property
    def exponent(self) -> float:
        return HEADLOSS_EXPONENTS[self.headloss_model]

    @property
    def total_demand(self) -> float:
        return float(sum(max(node.demand, 0.0) for node in self.junctions))

    def node(self, node_id: str) -> Node:
        return self.nodes[self.node_index[node_id]]

    def pipe(self, pipe_id: str) -> Pipe:
        return self.pipes[self.pipe_index[pipe_id]]

    def pump_for(self, tank_id: str) -> Pump | None:
        for pump in self.pumps:
            if pump.tank_id == tank_id:
                return pump
        return None

    def adjacent_pipes(self, node_id: str) -> List[Pipe]:
        return [pipe for pipe in self.pipes if node_id in (pipe.from_node, pipe.to_node)]

    def with_tank_levels(self, levels: Mapping[str, Tuple[float, float]]) -> "Network":
        """Copy with tank (water depth, height above ground) replaced."""
        unknown = sorted(set(levels) - {tank.id for tank in self.tanks})
        if unknown:
            raise NetworkValidationError(f"Unknown tank ids in design levels: {unknown}.")
        nodes = tuple(
            replace(node, water_depth=float(levels[node.id][0]), height_above_ground=float(levels[node.id][1]))
            if node.id in levels
            else node
            for node in self.nodes
        )
        return replace(self, nodes=nodes)


def _option_value(rows: Sequence[Mapping[str, Any]], key: str, default: Any) -> Any:
    for row in rows:
        if row["key"] == key:
            return row["values"][0]
    return default


def assemble_network(
    nodes: Iterable[Node],
    pipes: Iterable[Pipe],
    pumps: Iterable[Pump] = (),
    **fluid: Any,
) -> Network:
    """Build a Network and verify every topological invariant."""
    network = Network(nodes=tuple(nodes), pipes=tuple(pipes), pumps=tuple(pumps), **fluid)
    if network.headloss_model not in HEADLOSS_EXPONENTS:
        raise NetworkValidationError(f"Unknown headloss model {network.headloss_model!r}; expected HW or DW.")
    validation.validate_unique_ids([node.id for node in network.nodes], "node")
    validation.validate_unique_ids([pipe.id for pipe in network.pipes], "pipe")
    validation.validate_unique_ids([pump.tank_id for pump in network.pumps], "pump tank")
    validation.validate_endpoints(network.pipes, network.node_index)
    validation.validate_has_tank(network.tanks)
    for node in network.nodes:
        validation.validate_node_fields(node)
    for pipe in network.pipes:
        validation.validate_pipe_fields(pipe, network.headloss_model)
    for pump in network.pumps:
        tank = network.node(pump.tank_id) if pump.tank_id in network.node_index else None
        validation.validate_pump_fields(pump, tank)
    validation.validate_connected(network_graph(network))
    validation.validate_demand_balance(network.junctions, network.tanks)
    return network


def build_network(raw: Mapping[str, Sequence[Mapping[str, Any]]], pump_defaults: Mapping[str, Any] | None = None) -> Network:
    """Network from parsed input sections; file units (L/s, mm) become SI."""
    pump_defaults = pump_defaults or {}
    options = raw.get("OPTIONS", [])
    model = str(_option_value(options, "headloss", "HW")).upper()
    roughness_scale = 1e-3 if model == "DW" else 1.0

    nodes: List[Node] = []
    for row in raw.get("JUNCTIONS", []):
        nodes.append(Node(id=row["id"], elevation=row["elevation"], demand=row["demand"] / 1000.0))
    for row in raw.get("TANKS", []):
        supply = row.get("expected_supply")
        nodes.append(
            Node(
                id=row["id"],
                elevation=row["elevation"],
                kind=TANK,
                water_depth=row["water_depth"],
                height_above_ground=row["height_above_ground"],
                volume=row.get("volume"),
                expected_supply=None if supply is None else supply / 1000.0,
            )
        )
    pipes = [
        Pipe(
            id=row["id"],
            from_node=row["from"],
            to_node=row["to"],
            length=row["length"],
            diameter=row["diameter"] / 1000.0,
            roughness=row["roughness"] * roughness_scale,
        )
        for row in raw.get("PIPES", [])
    ]
    ground = {node.id: node.elevation for node in nodes}
    pumps = []
    for row in raw.get("PUMPS", []):
        elevation = row.get("elevation")
        if elevation is None:
            if row["tank"] not in ground:
                raise NetworkValidationError(f"Pump refers to unknown tank {row['tank']}.")
            elevation = ground[row["tank"]] - pump_defaults.get("pump_depth_below_base", 5.0)
        length = row.get("supply_length")
        diameter = row.get("supply_diameter")
        pumps.append(
            Pump(
                tank_id=row["tank"],
                elevation=elevation,
                supply_length=pump_defaults.get("supply_pipe_length", 500.0) if length is None else length,
                daily_hours=row["daily_hours"],
                efficiency=row["efficiency"],
                operating_hours=row["operating_hours"],
                supply_diameter=None if diameter is None else diameter / 1000.0,
                resistance=row.get("resistance"),
            )
        )
    return assemble_network(
        nodes,
        pipes,
        pumps,
        headloss_model=model,
        viscosity=_option_value(options, "viscosity", 1e-6),
        density=_option_value(options, "density", 1000.0),
        gravity=_option_value(options, "gravity", GRAVITY),
        specific_weight=_option_value(options, "specific_weight", 9810.0),
        day_factor=_option_value(options, "day_factor", 1.2),
        hour_factor=_option_value(options, "hour_factor", 1.5),
        network_hours=_option_value(options, "network_hours", 24.0),
    )


def reverse_pipe(network: Network, pipe_id: str) -> Network:
    pipes = tuple(
        replace(pipe, from_node=pipe.to_node, to_node=pipe.from_node) if pipe.id == pipe_id else pipe
        for pipe in network.pipes
    )
    return replace(network, pipes=pipes)


def network_graph(network: Network) -> nx.MultiGraph:
    graph = nx.MultiGraph()
    graph.add_nodes_from(node.id for node in network.nodes)
    ranked = sorted(network.pipes, key=lambda pipe: natural_key(pipe.id))
    for rank, pipe in enumerate(ranked):
        graph.add_edge(pipe.from_node, pipe.to_node, key=pipe.id, rank=rank)
    return graph


def incidence_matrix(network: Network) -> sp.csr_matrix:
    """Node-by-pipe matrix over all nodes: -1 where a pipe leaves, +1 where it enters."""
    rows, cols, values = [], [], []
    for column, pipe in enumerate(network.pipes):
        rows += [network.node_index[pipe.from_node], network.node_index[pipe.to_node]]
        cols += [column, column]
        values += [-1.0, 1.0]
    return sp.csr_matrix((values, (rows, cols)), shape=(len(network.nodes), len(network.pipes)))


def junction_incidence(network: Network) -> sp.csr_matrix:
    """F_d: junction rows only; tank mass balance is left free."""
    position = {node.id: row for row, node in enumerate(network.junctions)}
    rows, cols, values = [], [], []
    for column, pipe in enumerate(network.pipes):
        if pipe.from_node in position:
            rows.append(position[pipe.from_node])
            cols.append(column)
            values.append(-1.0)
        if pipe.to_node in position:
            rows.append(position[pipe.to_node])
            cols.append(column)
            values.append(1.0)
    return sp.csr_matrix((values, (rows, cols)), shape=(len(network.junctions), len(network.pipes)))


@dataclass(frozen=True)
class SpanningTree:
    root: str
    order: Tuple[str, ...]
    parent: Mapping[str, Tuple[str, str, int]]  # child -> (parent, pipe id, +1 if pipe runs parent->child)
    depth: Mapping[str, int]

    @property
    def pipes(self) -> frozenset:
        return frozenset(pipe_id for _, pipe_id, _ in self.parent.values())

    def walk(self, start: str, end: str) -> List[Tuple[str, int]]:
        """Signed pipes along the tree path from start to end."""
        upward, downward = [], []
        a, b = start, end
        while self.depth[a] > self.depth[b]:
            parent, pipe_id, sign = self.parent[a]
            upward.append((pipe_id, -sign))
            a = parent
        while self.depth[b] > self.depth[a]:
            parent, pipe_id, sign = self.parent[b]
            downward.append((pipe_id, sign))
            b = parent
        while a != b:
            parent_a, pipe_a, sign_a = self.parent[a]
            parent_b, pipe_b, sign_b = self.parent[b]
            upward.append((pipe_a, -sign_a))
            downward.append((pipe_b, sign_b))
            a, b = parent_a, parent_b
        return upward + downward[::-1]


def spanning_tree(network: Network) -> SpanningTree:
    """Kruskal tree in ascending pipe-id order, rooted at the lowest-id tank."""
    graph = network_graph(network)
    tree = nx.Graph()
    tree.add_nodes_from(node.id for node in network.nodes)
    for u, v, key, _ in nx.minimum_spanning_edges(graph, algorithm="kruskal", weight="rank", keys=True, data=True):
        tree.add_edge(u, v, pipe=key)
    root = network.tanks[0].id
    parent: Dict[str, Tuple[str, str, int]] = {}
    depth = {root: 0}
    order = [root]
    for upper, lower in nx.bfs_edges(tree, root):
        pipe_id = tree.edges[upper, lower]["pipe"]
        sign = 1 if network.pipe(pipe_id).from_node == upper else -1
        parent[lower] = (upper, pipe_id, sign)
        depth[lower] = depth[upper] + 1
        order.append(lower)
    return SpanningTree(root=root, order=tuple(order), parent=parent, depth=depth)


@dataclass(frozen=True)
class Loop:
    pipes: Tuple[Tuple[str, int], ...]
    start: str | None = None
    end: str | None = None

    @property
    def is_pseudo(self) -> bool:
        return self.start is not None

    def head_difference(self, network: Network) -> float:
        if not self.is_pseudo:
            return 0.0
        return network.node(self.start).head - network.node(self.end).head


@dataclass(frozen=True, eq=False)
class LoopSet:
    loops: Tuple[Loop, ...]
    head_differences: np.ndarray
    junction_incidence: sp.csr_matrix
    loop_incidence: sp.csr_matrix
    tree: SpanningTree = field(repr=False)

    def __len__(self) -> int:
        return len(self.loops)

    def refresh(self, network: Network) -> "LoopSet":
        """Recompute pseudo-loop head differences after tank levels change."""
        return replace(self, head_differences=_head_differences(self.loops, network))


def _head_differences(loops: Sequence[Loop], network: Network) -> np.ndarray:
    return np.array([loop.head_difference(network) for loop in loops], dtype=float)


def _loop_matrix(network: Network, loops: Sequence[Loop]) -> sp.csr_matrix:
    matrix = sp.lil_matrix((len(loops), len(network.pipes)))
    for row, loop in enumerate(loops):
        for pipe_id, sign in loop.pipes:
            matrix[row, network.pipe_index[pipe_id]] += sign
    return matrix.tocsr()


def _make_loopset(network: Network, loops: Sequence[Loop], tree: SpanningTree) -> LoopSet:
    return LoopSet(
        loops=tuple(loops),
        head_differences=_head_differences(loops, network),
        junction_incidence=junction_incidence(network),
        loop_incidence=_loop_matrix(network, loops),
        tree=tree,
    )


def cycle_basis(network: Network) -> LoopSet:
    """Fundamental cycles plus one pseudo-loop per extra tank."""
    tree = spanning_tree(network)
    tree_pipes = tree.pipes
    loops: List[Loop] = []
    for pipe in sorted(network.pipes, key=lambda item: natural_key(item.id)):
        if pipe.id in tree_pipes:
            continue
        loops.append(Loop(pipes=((pipe.id, 1), *tree.walk(pipe.to_node, pipe.from_node))))
    for tank in network.tanks[1:]:
        loops.append(Loop(pipes=tuple(tree.walk(tree.root, tank.id)), start=tree.root, end=tank.id))
    return _make_loopset(network, loops, tree)


def signed_pipes(network: Network, tokens: Sequence[str], index: int) -> List[Tuple[str, int]]:
    pipes = []
    for token in tokens:
        sign = -1 if token.startswith("-") else 1
        pipe_id = token.lstrip("+-")
        if pipe_id not in network.pipe_index:
            raise NetworkValidationError(f"Loop {index} references unknown pipe {pipe_id}.")
        pipes.append((pipe_id, sign))
    return pipes


def _matrix_row(network: Network, row: Sequence[float], index: int) -> List[Tuple[str, int]]:
    values = np.asarray(row, dtype=float)
    if values.size > len(network.pipes):
        raise NetworkValidationError(f"Loop {index} has {values.size} entries for {len(network.pipes)} pipes.")
    values = np.pad(values, (0, len(network.pipes) - values.size))
    if not np.all(np.isin(values, (-1.0, 0.0, 1.0))):
        raise NetworkValidationError(f"Loop {index} has entries outside -1/0/1.")
    return [(network.pipes[column].id, int(values[column])) for column in np.flatnonzero(values)]


def _classify_walk(network: Network, pipes: List[Tuple[str, int]], index: int) -> Loop:
    vector = np.zeros(len(network.pipes))
    for pipe_id, sign in pipes:
        vector[network.pipe_index[pipe_id]] += sign
    imbalance = incidence_matrix(network) @ vector
    touched = np.flatnonzero(np.abs(imbalance) > 1e-12)
    if touched.size == 0:
        return Loop(pipes=tuple(pipes))
    ends = [network.nodes[position] for position in touched]
    if len(ends) == 2 and all(node.is_tank for node in ends) and sorted(imbalance[touched]) == [-1.0, 1.0]:
        start = ends[0] if imbalance[touched[0]] < 0 else ends[1]
        end = ends[1] if start is ends[0] else ends[0]
        return Loop(pipes=tuple(pipes), start=start.id, end=end.id)
    raise NetworkValidationError(
        f"Loop {index} is an open walk; unbalanced at nodes {[node.id for node in ends]}."
    )


def accept_explicit_loops(network: Network, user_loops: Sequence[Any]) -> LoopSet:
    """Validate a user loop set given as signed pipe tokens, matrix rows, or Loop objects."""
    loops: List[Loop] = []
    for index, entry in enumerate(user_loops, start=1):
        if isinstance(entry, Loop):
            pipes = list(entry.pipes)
        elif len(entry) and all(isinstance(token, str) for token in entry):
            pipes = signed_pipes(network, entry, index)
        else:
            pipes = _matrix_row(network, entry, index)
        loop = _classify_walk(network, pipes, index)
        if isinstance(entry, Loop) and (entry.start, entry.end) != (loop.start, loop.end):
            raise NetworkValidationError(
                f"Loop {index} runs from {loop.start} to {loop.end}, not {entry.start} to {entry.end}."
            )
        loops.append(loop)
    expected = len(network.pipes) - len(network.junctions)
    if len(loops) != expected:
        raise NetworkValidationError(f"Wrong loop count: got {len(loops)}, expected {expected} (pipes - junctions).")
    loopset = _make_loopset(network, loops, spanning_tree(network))
    if loops and np.linalg.matrix_rank(loopset.loop_incidence.toarray()) < len(loops):
        raise NetworkValidationError("Rank deficiency: explicit loops are not linearly independent.")
    return loopset
