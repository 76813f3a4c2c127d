from pathlib import Path
import sys

import networkx as nx
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from wdn_design import hydraulics
from wdn_design.hydraulics import (
    ConvergenceError,
    SolverOptions,
    assemble_residuals,
    friction_factor,
    initial_flows,
    jacobian,
    mae,
    resistance_hw,
    solve_wfp,
)
from wdn_design.network import Node, Pipe, TANK, assemble_network, cycle_basis, reverse_pipe

CASE_A_FLOWS = [0.2488, 0.0199, -0.0199, 0.2512, 0.0289, 0.5000]
CASE_B_FLOWS = [13.9725, 8.7167, -0.7167, 1.2833, 6.2833, -4.7442, 21.0275, 26.0275, 40.0]


def test_friction_factor_is_laminar_at_low_reynolds() -> None:
    assert friction_factor(500.0, 1e-5, 0.1) == pytest.approx(64.0 / 500.0, rel=1e-6)


def test_friction_factor_tracks_swamee_jain_when_turbulent() -> None:
    re, roughness, diameter = 1e5, 1e-5, 0.1
    swamee_jain = 0.25 / np.log10(roughness / (3.7 * diameter) + 5.74 / re**0.9) ** 2
    assert friction_factor(re, roughness, diameter) == pytest.approx(swamee_jain, rel=0.02)


def test_friction_factor_rejects_zero_reynolds() -> None:
    with pytest.raises(ValueError):
        friction_factor(0.0, 1e-5, 0.1)


def test_hazen_williams_resistance() -> None:
    assert resistance_hw(100, 130, 0.04) == pytest.approx(842048.4, rel=1e-3)


def test_case_a_flows_and_pressures(load_case) -> None:
    scenario = load_case("a")
    solution = solve_wfp(scenario.network, scenario.loopset, scenario.solver)
    assert solution.converged
    assert np.allclose(solution.flows.to_numpy() * 1000.0, CASE_A_FLOWS, atol=5e-4)
    assert solution.pressures["1"] == pytest.approx(20.18, abs=0.01)
    assert solution.pressures["3"] == pytest.approx(9.9991, abs=2e-3)
    assert solution.mass_residual <= scenario.solver.tol_mass
    assert solution.energy_residual <= scenario.solver.tol_energy
    assert solution.tank_outflows["5"] == pytest.approx(0.0005, abs=1e-9)


def test_case_b_flows(load_case) -> None:
    scenario = load_case("b")
    solution = solve_wfp(scenario.network, scenario.loopset, scenario.solver)
    assert np.allclose(solution.flows.to_numpy() * 1000.0, CASE_B_FLOWS, atol=5e-3)
    observed = scenario.document.reference("flow", "observed")
    ids = list(observed)
    assert mae(solution.flows.loc[ids] * 1000.0, [observed[i] for i in ids]) == pytest.approx(0.004, abs=2e-3)
    assert solution.pressures["4"] == pytest.approx(9.9974, abs=5e-3)
    assert solution.pipe_states[0].friction_factor is not None


def test_case_c_matches_reference_series(load_case) -> None:
    scenario = load_case("c")
    solution = solve_wfp(scenario.network, scenario.loopset, scenario.solver)
    flows = solution.flows * 1000.0
    for label, limit in (("modeled", 0.1), ("published", 0.2)):
        reference = scenario.document.reference("flow", label)
        ids = list(reference)
        assert mae(flows.loc[ids], [reference[i] for i in ids]) < limit
    total = sum(node.demand for node in scenario.network.junctions)
    assert solution.tank_outflows.sum() == pytest.approx(total, abs=1e-8)


@pytest.mark.parametrize("case", ["a", "b"])
def test_explicit_loops_give_same_flows(load_case, case: str) -> None:
    auto = load_case(case)
    explicit = load_case(case, loops="explicit")
    first = solve_wfp(auto.network, auto.loopset, auto.solver)
    second = solve_wfp(explicit.network, explicit.loopset, explicit.solver)
    assert np.allclose(first.flows.to_numpy(), second.flows.to_numpy(), atol=1e-8)
    assert np.allclose(first.heads.to_numpy(), second.heads.to_numpy(), atol=1e-5)


@pytest.mark.parametrize("case, pipe_id", [("a", "3"), ("b", "6")])
def test_reversing_a_pipe_flips_its_flow_and_keeps_heads(load_case, case: str, pipe_id: str) -> None:
    scenario = load_case(case)
    base = solve_wfp(scenario.network, scenario.loopset)
    reversed_network = reverse_pipe(scenario.network, pipe_id)
    flipped = solve_wfp(reversed_network, cycle_basis(reversed_network))
    expected = base.flows.copy()
    expected[pipe_id] = -expected[pipe_id]
    assert np.allclose(flipped.flows.to_numpy(), expected.to_numpy(), atol=1e-8)
    assert np.allclose(flipped.heads.to_numpy(), base.heads.to_numpy(), atol=1e-5)


def test_heads_are_consistent_with_pipe_losses(load_case) -> None:
    scenario = load_case("b")
    solution = solve_wfp(scenario.network, scenario.loopset, scenario.solver)
    assert solution.closure < 1e-5
    for pipe, state in zip(scenario.network.pipes, solution.pipe_states):
        flow = solution.flows[pipe.id]
        drop = state.resistance * flow * abs(flow) ** (state.exponent - 1.0)
        assert solution.heads[pipe.from_node] - solution.heads[pipe.to_node] == pytest.approx(drop, abs=1e-5)


def test_jacobian_matches_finite_differences(load_case) -> None:
    scenario = load_case("a")
    network, loopset = scenario.network, scenario.loopset
    q = np.array([2e-4, 3e-5, -2e-5, 2.5e-4, 4e-5, 5e-4])
    analytic = jacobian(network, loopset, q).toarray()
    numeric = np.zeros_like(analytic)
    step = 1e-9
    for column in range(q.size):
        shift = np.zeros_like(q)
        shift[column] = step
        numeric[:, column] = (
            assemble_residuals(network, loopset, q + shift) - assemble_residuals(network, loopset, q - shift)
        ) / (2 * step)
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_zero_demand_gives_zero_flows() -> None:
    nodes = [
        Node(id="T", elevation=0.0, kind=TANK, water_depth=5.0),
        Node(id="1", elevation=0.0),
        Node(id="2", elevation=0.0),
    ]
    pipes = [
        Pipe(id="1", from_node="T", to_node="1", length=100.0, diameter=0.1, roughness=130.0),
        Pipe(id="2", from_node="1", to_node="2", length=100.0, diameter=0.1, roughness=130.0),
        Pipe(id="3", from_node="2", to_node="T", length=100.0, diameter=0.1, roughness=130.0),
    ]
    network = assemble_network(nodes, pipes)
    solution = solve_wfp(network, cycle_basis(network))
    assert np.allclose(solution.flows.to_numpy(), 0.0, atol=1e-5)
    assert np.allclose(solution.pressures.to_numpy(), 5.0, atol=1e-4)


def test_iteration_cap_raises_with_best_iterate(load_case) -> None:
    scenario = load_case("a")
    with pytest.raises(ConvergenceError) as caught:
        solve_wfp(scenario.network, scenario.loopset, SolverOptions(max_iterations=1))
    assert caught.value.solution is not None
    assert not caught.value.solution.converged


def test_solver_options_reject_nonpositive_values() -> None:
    with pytest.raises(ValueError):
        SolverOptions(tol_mass=0.0)
    with pytest.raises(ValueError):
        SolverOptions(backtrack_factor=1.5)


def test_mae_requires_matching_nonempty_series() -> None:
    assert mae([1.0, 2.0], [1.5, 1.0]) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        mae([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        mae([], [])


@pytest.mark.parametrize("case", ["b", "c"])
def test_energy_closes_around_cycles_outside_the_basis(load_case, case: str) -> None:
    scenario = load_case(case)
    network = scenario.network
    solution = solve_wfp(network, scenario.loopset, scenario.solver)
    drops = {
        pipe.id: state.resistance * solution.flows[pipe.id] * abs(solution.flows[pipe.id]) ** (state.exponent - 1.0)
        for pipe, state in zip(network.pipes, solution.pipe_states)
    }
    graph = nx.Graph()
    for pipe in network.pipes:
        graph.add_edge(pipe.from_node, pipe.to_node, pipe=pipe)
    limit = (len(scenario.loopset) + 1) * scenario.solver.tol_energy
    rng = np.random.default_rng(5)
    for root in rng.choice([node.id for node in network.nodes], size=4, replace=False):
        for cycle in nx.cycle_basis(graph, root=str(root)):
            total = 0.0
            for u, v in zip(cycle, cycle[1:] + cycle[:1]):
                pipe = graph.edges[u, v]["pipe"]
                total += drops[pipe.id] if pipe.from_node == u else -drops[pipe.id]
            assert abs(total) <= limit


def test_path_dependent_heads_are_rejected(load_case, monkeypatch) -> None:
    scenario = load_case("a")
    monkeypatch.setattr(hydraulics, "head_closure", lambda *args, **kwargs: 1.0)
    with pytest.raises(ConvergenceError, match="depend on the path"):
        solve_wfp(scenario.network, scenario.loopset, scenario.solver)


def test_stalled_line_search_keeps_the_better_iterate(load_case, monkeypatch) -> None:
    scenario = load_case("a")
    options = SolverOptions(max_backtracks=1)
    monkeypatch.setattr(hydraulics, "spsolve", lambda matrix, rhs: np.full(matrix.shape[1], 1e3))
    with pytest.raises(ConvergenceError, match="no decrease") as caught:
        solve_wfp(scenario.network, scenario.loopset, options)
    best = caught.value.solution
    assert best.iterations == 0
    assert np.allclose(best.flows.to_numpy(), initial_flows(scenario.network, options))
