import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netdesign.instance import (FormatError, FullSolution, GenParams, Instance,
                                ValidationError, check_feasibility, empty_state,
                                evaluate_objective, generate_instance,
                                load_instance, save_instance, state_from_plan)
from netdesign.subproblem import solve_subproblem

from conftest import fig1_instance


def small_instance(**kw) -> Instance:
    params = GenParams(n_nodes=5, n_periods=2, link_density=0.8, **kw)
    return generate_instance(params, seed=11)


def test_minimal_two_node_instance():
    T, N, L = 1, 2, 1
    inst = Instance(
        n_nodes=N, n_periods=T, links=[(0, 1)],
        demand=np.ones((N, T + 1)), open_cost=np.ones((N, T + 1)),
        link_cost=np.ones((L, T + 1)), routing_cost=np.ones((2 * L, T + 1)),
        facility_op_cost=np.ones((N, T + 1)), link_op_cost=np.ones((L, T + 1)),
        budget_fac=np.ones(T + 1), budget_link=np.ones(T + 1),
        w0=np.zeros(N), x0=np.zeros(L))
    assert inst.n_arcs == 2
    assert inst.arcs == [(0, 1), (1, 0)]


def test_self_loop_rejected():
    T, N, L = 1, 2, 1
    with pytest.raises(ValidationError):
        Instance(
            n_nodes=N, n_periods=T, links=[(1, 1)],
            demand=np.zeros((N, T + 1)), open_cost=np.zeros((N, T + 1)),
            link_cost=np.zeros((L, T + 1)), routing_cost=np.zeros((2 * L, T + 1)),
            facility_op_cost=np.zeros((N, T + 1)), link_op_cost=np.zeros((L, T + 1)),
            budget_fac=np.zeros(T + 1), budget_link=np.zeros(T + 1),
            w0=np.zeros(N), x0=np.zeros(L))


def test_negative_cost_rejected():
    inst = small_instance()
    inst.open_cost[0, 1] = -1.0
    with pytest.raises(ValidationError):
        inst.validate()


def test_round_trip(tmp_path):
    inst = small_instance()
    path = tmp_path / "a.inst"
    save_instance(inst, path)
    again = load_instance(path)
    assert again == inst  # field-by-field comparison

    path2 = tmp_path / "b.inst"
    save_instance(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_permuted_links_canonicalize(tmp_path):
    inst = small_instance()
    perm = list(reversed(range(inst.n_links)))
    arc_perm = [x for l in perm for x in (2 * l, 2 * l + 1)]
    shuffled = Instance(
        n_nodes=inst.n_nodes, n_periods=inst.n_periods,
        links=[(inst.links[l][1], inst.links[l][0]) for l in perm],  # reversed pairs too
        demand=inst.demand, open_cost=inst.open_cost,
        link_cost=inst.link_cost[perm], routing_cost=inst.routing_cost[arc_perm],
        facility_op_cost=inst.facility_op_cost, link_op_cost=inst.link_op_cost[perm],
        budget_fac=inst.budget_fac, budget_link=inst.budget_link,
        w0=inst.w0, x0=inst.x0[perm])
    a, b = tmp_path / "a", tmp_path / "b"
    save_instance(inst, a)
    save_instance(shuffled, b)
    assert a.read_bytes() == b.read_bytes()


def test_zero_demand_round_trip(tmp_path):
    inst = small_instance()
    inst.demand[:] = 0.0
    path = tmp_path / "zero.inst"
    save_instance(inst, path)
    assert load_instance(path) == inst


def test_parse_error_carries_line(tmp_path):
    path = tmp_path / "bad.inst"
    path.write_text("n_nodes 2\nn_periods 1\nLINKS\n0 zork\n")
    with pytest.raises(FormatError) as exc:
        load_instance(path)
    assert exc.value.line == 4


def test_generator_deterministic():
    p = GenParams(n_nodes=5, n_periods=2)
    assert generate_instance(p, 7) == generate_instance(p, 7)
    assert generate_instance(p, 7) != generate_instance(p, 8)


def test_full_density_link_count():
    inst = generate_instance(GenParams(n_nodes=6, n_periods=1, link_density=1.0), 3)
    assert inst.n_links == 6 * 5 // 2


def test_density_too_low_raises():
    from netdesign.instance import GenerationError
    with pytest.raises(GenerationError):
        generate_instance(GenParams(n_nodes=8, n_periods=1, link_density=0.01,
                                    max_retries=5), 3)


@pytest.mark.parametrize("seed", range(8))
def test_existing_network_period0_serves_everyone(seed):
    inst = generate_instance(GenParams(n_nodes=6, n_periods=2,
                                       existing_network=True), seed)
    state = empty_state(inst)
    # period-0 network copied into period 1 must reach an open facility
    state.W[:, 1] = state.W[:, 0]
    state.X[:, 1] = state.X[:, 0]
    for k in range(inst.n_nodes):
        assert not math.isinf(solve_subproblem(inst, state, k, 1))


def _zero_solution(inst) -> FullSolution:
    Z = np.zeros((inst.n_arcs, inst.n_nodes, inst.n_periods + 1))
    theta = np.zeros((inst.n_nodes, inst.n_periods + 1))
    return FullSolution(empty_state(inst), Z, theta, 0.0)


def test_objective_zero_state():
    inst = fig1_instance()
    sol = _zero_solution(inst)
    sol.state.W[:, 0] = 0
    sol.state.X[:, 0] = 0
    assert evaluate_objective(inst, sol) == 0.0


def test_objective_facility_everywhere_no_flow():
    inst = small_instance()
    sol = _zero_solution(inst)
    for t in inst.periods():
        sol.state.W[:, t] = 1.0
    want = float(inst.facility_op_cost[:, 1:].sum())
    # pre-existing links still run their operating cost
    want += float((inst.link_op_cost[:, 1:] * inst.x0[:, None]).sum())
    sol.state.X[:, 1:] = np.repeat(sol.state.X[:, :1], inst.n_periods, axis=1)
    assert evaluate_objective(inst, sol) == pytest.approx(want)


def test_objective_matches_naive_resummation():
    inst = small_instance()
    rng = np.random.default_rng(0)
    sol = _zero_solution(inst)
    sol.state.W[:, 1:] = rng.random((inst.n_nodes, inst.n_periods))
    sol.state.X[:, 1:] = rng.random((inst.n_arcs, inst.n_periods))
    sol.Z[:, :, 1:] = rng.random((inst.n_arcs, inst.n_nodes, inst.n_periods))
    naive = 0.0
    for t in inst.periods():
        for i in range(inst.n_nodes):
            naive += inst.facility_op_cost[i, t] * sol.state.W[i, t]
        for l in range(inst.n_links):
            naive += inst.link_op_cost[l, t] * sol.state.X[2 * l, t]
        for k in range(inst.n_nodes):
            for a in range(inst.n_arcs):
                naive += inst.routing_cost[a, t] * inst.demand[k, t] * sol.Z[a, k, t]
    assert evaluate_objective(inst, sol) == pytest.approx(naive)


@given(st.floats(min_value=0.01, max_value=50.0))
@settings(max_examples=20, deadline=None)
def test_objective_scales_linearly(alpha):
    inst = small_instance()
    rng = np.random.default_rng(5)
    sol = _zero_solution(inst)
    sol.state.W[:, 1:] = rng.random((inst.n_nodes, inst.n_periods))
    sol.Z[:, :, 1:] = rng.random((inst.n_arcs, inst.n_nodes, inst.n_periods))
    base = evaluate_objective(inst, sol)
    scaled = Instance(
        n_nodes=inst.n_nodes, n_periods=inst.n_periods, links=list(inst.links),
        demand=inst.demand, open_cost=inst.open_cost * alpha,
        link_cost=inst.link_cost * alpha, routing_cost=inst.routing_cost * alpha,
        facility_op_cost=inst.facility_op_cost * alpha,
        link_op_cost=inst.link_op_cost * alpha,
        budget_fac=inst.budget_fac * alpha, budget_link=inst.budget_link * alpha,
        w0=inst.w0, x0=inst.x0)
    assert evaluate_objective(scaled, sol) == pytest.approx(alpha * base, rel=1e-9)


def test_check_feasibility_flags_closed_arc_routing():
    inst = fig1_instance()
    sol = _zero_solution(inst)
    sol.state.W[3, 1] = 1.0
    sol.Z[2 * 1, 0, 1] = 1.0  # arc (B, C) is closed
    report = check_feasibility(inst, sol)
    assert any(v.constraint == "5" and v.index[0] == 2 for v in report)


def test_check_feasibility_flags_budget():
    inst = small_instance()
    inst2 = Instance(
        n_nodes=inst.n_nodes, n_periods=inst.n_periods, links=list(inst.links),
        demand=inst.demand, open_cost=inst.open_cost, link_cost=inst.link_cost,
        routing_cost=inst.routing_cost, facility_op_cost=inst.facility_op_cost,
        link_op_cost=inst.link_op_cost,
        budget_fac=np.zeros(inst.n_periods + 1), budget_link=inst.budget_link,
        w0=inst.w0, x0=inst.x0)
    new_fac = int(np.nonzero(inst2.w0 == 0)[0][0])
    st_plan = state_from_plan(inst2, {1: [new_fac]}, {})
    sol = _zero_solution(inst2)
    sol.state = st_plan
    report = check_feasibility(inst2, sol)
    assert any(v.constraint == "8" for v in report)


def test_check_feasibility_demand_coverage():
    inst = fig1_instance()
    sol = _zero_solution(inst)
    report = check_feasibility(inst, sol)
    assert any(v.constraint == "2" for v in report)
