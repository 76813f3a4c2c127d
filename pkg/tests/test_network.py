from pathlib import Path
import sys

import networkx as nx
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from wdn_design.network import (
    Loop,
    Node,
    Pipe,
    TANK,
    accept_explicit_loops,
    assemble_network,
    cycle_basis,
    incidence_matrix,
    junction_incidence,
    natural_key,
    spanning_tree,
)
from wdn_design.validation import NetworkValidationError


def _network(edges, tanks=("0",), demand=0.001, **fluid):
    node_ids = sorted({end for edge in edges for end in edge}, key=natural_key)
    nodes = [
        Node(id=node_id, elevation=0.0, kind=TANK, water_depth=10.0 - index)
        if node_id in tanks
        else Node(id=node_id, elevation=0.0, demand=demand)
        for index, node_id in enumerate(node_ids)
    ]
    pipes = [Pipe(id=str(i + 1), from_node=u, to_node=v, length=100.0, diameter=0.1, roughness=130.0) for i, (u, v) in enumerate(edges)]
    return assemble_network(nodes, pipes, **fluid)


def _vector(network, loop):
    vector = np.zeros(len(network.pipes))
    for pipe_id, sign in loop.pipes:
        vector[network.pipe_index[pipe_id]] += sign
    return vector


def test_natural_key_orders_numeric_ids() -> None:
    assert sorted(["10", "2", "1", "T3", "T10"], key=natural_key) == ["1", "2", "10", "T3", "T10"]


def test_junction_incidence_excludes_tanks(load_case) -> None:
    network = load_case("a").network
    matrix = junction_incidence(network).toarray()
    assert matrix.shape == (4, 6)
    # pipe 6 runs tank 5 -> junction 1
    assert matrix[:, 5].tolist() == [1.0, 0.0, 0.0, 0.0]
    assert matrix[:, 0].tolist() == [-1.0, 1.0, 0.0, 0.0]
    full = incidence_matrix(network).toarray()
    assert np.allclose(full.sum(axis=0), 0.0)


@pytest.mark.parametrize("case, pseudo", [("a", 0), ("b", 0), ("c", 1)])
def test_cycle_basis_has_pipes_minus_junctions_loops(load_case, case: str, pseudo: int) -> None:
    network = load_case(case).network
    loopset = cycle_basis(network)
    assert len(loopset) == len(network.pipes) - len(network.junctions)
    assert sum(loop.is_pseudo for loop in loopset.loops) == pseudo
    assert np.linalg.matrix_rank(loopset.loop_incidence.toarray()) == len(loopset)


def test_pseudo_loop_runs_between_tanks(load_case) -> None:
    network = load_case("c").network
    loopset = cycle_basis(network)
    pseudo = [loop for loop in loopset.loops if loop.is_pseudo]
    assert (pseudo[0].start, pseudo[0].end) == ("13", "14")
    assert loopset.head_differences[-1] == pytest.approx(13.99 - 10.33)
    imbalance = incidence_matrix(network) @ _vector(network, pseudo[0])
    assert imbalance[network.node_index["13"]] == -1.0
    assert imbalance[network.node_index["14"]] == 1.0


def test_spanning_tree_prefers_low_pipe_ids(load_case) -> None:
    network = load_case("b").network
    tree = spanning_tree(network)
    assert tree.root == "8"
    assert tree.pipes == frozenset({"1", "2", "3", "4", "5", "7", "9"})
    assert tree.walk("8", "4") == [("9", 1), ("1", 1), ("2", 1), ("3", -1), ("4", -1)]


def _random_connected_graph(seed: int) -> nx.Graph:
    rng = np.random.default_rng(seed)
    size = int(rng.integers(3, 31))
    graph = nx.Graph()
    graph.add_nodes_from(range(size))
    for node in range(1, size):
        graph.add_edge(node, int(rng.integers(0, node)))
    for _ in range(int(rng.integers(0, size + 1))):
        u, v = (int(value) for value in rng.integers(0, size, 2))
        if u != v:
            graph.add_edge(u, v)
    return graph


@pytest.mark.parametrize("seed", range(100))
def test_random_graphs_give_independent_closed_loops(seed: int) -> None:
    graph = _random_connected_graph(seed)
    edges = [(str(u), str(v)) for u, v in graph.edges()]
    tanks = ("0", "1") if seed % 2 else ("0",)
    network = _network(edges, tanks=tanks)
    loopset = cycle_basis(network)
    assert len(loopset) == len(nx.cycle_basis(graph)) + len(tanks) - 1
    assert len(loopset) == len(network.pipes) - len(network.junctions)
    if len(loopset):
        assert np.linalg.matrix_rank(loopset.loop_incidence.toarray()) == len(loopset)
    full = incidence_matrix(network)
    for loop in loopset.loops:
        imbalance = full @ _vector(network, loop)
        if loop.is_pseudo:
            assert sorted(np.flatnonzero(imbalance)) == sorted(
                [network.node_index[loop.start], network.node_index[loop.end]]
            )
        else:
            assert np.allclose(imbalance, 0.0)


def test_explicit_loops_accept_tokens_and_rows(load_case) -> None:
    network = load_case("a").network
    from_tokens = accept_explicit_loops(network, [["1", "-4", "5"], ["2", "-3", "-5"]])
    from_rows = accept_explicit_loops(network, [[1, 0, 0, -1, 1, 0], [0, 1, -1, 0, -1]])
    assert np.allclose(from_tokens.loop_incidence.toarray(), from_rows.loop_incidence.toarray())


def test_explicit_loops_reject_wrong_count(load_case) -> None:
    network = load_case("a").network
    with pytest.raises(NetworkValidationError, match="Wrong loop count"):
        accept_explicit_loops(network, [["1", "-4", "5"]])


def test_explicit_loops_reject_dependent_rows(load_case) -> None:
    network = load_case("a").network
    with pytest.raises(NetworkValidationError, match="Rank deficiency"):
        accept_explicit_loops(network, [["1", "-4", "5"], ["-1", "4", "-5"]])


def test_explicit_loops_reject_open_walk(load_case) -> None:
    network = load_case("a").network
    with pytest.raises(NetworkValidationError, match="open walk"):
        accept_explicit_loops(network, [["1", "2"], ["2", "-3", "-5"]])


def test_explicit_loop_endpoints_must_match(load_case) -> None:
    network = load_case("c").network
    auto = cycle_basis(network)
    loops = list(auto.loops)
    swapped = Loop(pipes=loops[-1].pipes, start=loops[-1].end, end=loops[-1].start)
    with pytest.raises(NetworkValidationError, match="runs from"):
        accept_explicit_loops(network, loops[:-1] + [swapped])
    accepted = accept_explicit_loops(network, loops)
    assert np.allclose(accepted.head_differences, auto.head_differences)


def test_disconnected_network_is_rejected() -> None:
    with pytest.raises(NetworkValidationError, match="disconnected"):
        _network([("0", "1"), ("1", "2"), ("3", "4")])


def test_network_without_tank_is_rejected() -> None:
    with pytest.raises(NetworkValidationError, match="no tank"):
        _network([("1", "2"), ("2", "3")], tanks=())


def test_pipe_to_unknown_node_is_rejected() -> None:
    nodes = [Node(id="T", elevation=0.0, kind=TANK, water_depth=5.0), Node(id="1", elevation=0.0, demand=0.001)]
    pipes = [Pipe(id="1", from_node="T", to_node="9", length=10.0, diameter=0.1, roughness=130.0)]
    with pytest.raises(NetworkValidationError, match="unknown node"):
        assemble_network(nodes, pipes)


def test_unbalanced_declared_supply_is_rejected() -> None:
    nodes = [
        Node(id="T", elevation=0.0, kind=TANK, water_depth=5.0, expected_supply=0.002),
        Node(id="1", elevation=0.0, demand=0.001),
    ]
    pipes = [Pipe(id="1", from_node="T", to_node="1", length=10.0, diameter=0.1, roughness=130.0)]
    with pytest.raises(NetworkValidationError, match="Unbalanced demand"):
        assemble_network(nodes, pipes)


@pytest.mark.parametrize("declared, rejected", [(0.003, True), (0.0005, False)])
def test_partially_declared_supply_must_fit_within_demand(declared: float, rejected: bool) -> None:
    nodes = [
        Node(id="T", elevation=0.0, kind=TANK, water_depth=5.0, expected_supply=declared),
        Node(id="U", elevation=0.0, kind=TANK, water_depth=4.0),
        Node(id="1", elevation=0.0, demand=0.001),
    ]
    pipes = [
        Pipe(id="1", from_node="T", to_node="1", length=10.0, diameter=0.1, roughness=130.0),
        Pipe(id="2", from_node="U", to_node="1", length=10.0, diameter=0.1, roughness=130.0),
    ]
    if rejected:
        with pytest.raises(NetworkValidationError, match="exceed junction demands"):
            assemble_network(nodes, pipes)
    else:
        assert assemble_network(nodes, pipes).total_demand == pytest.approx(0.001)


def test_with_tank_levels_moves_tank_head(load_case) -> None:
    network = load_case("a").network
    raised = network.with_tank_levels({"5": (12.0, 8.0)})
    assert raised.node("5").head == pytest.approx(120.0)
    assert network.node("5").head == pytest.approx(120.84)
    with pytest.raises(NetworkValidationError):
        network.with_tank_levels({"1": (1.0, 1.0)})
