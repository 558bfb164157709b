"""Independent oracles used across the test suite.

Everything here is deliberately naive: exhaustive enumeration over
construction schedules, shortest paths by brute-force path enumeration,
knapsack checks by subset enumeration.  None of it shares code with the
solver paths it is checking.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from netdesign.instance import Instance, NetworkState, state_from_plan


def enumerate_schedules(inst: Instance):
    """Yield every monotone, budget-feasible construction schedule as a
    NetworkState (period 0 respected).  Exponential; tiny instances only."""
    N, T, L = inst.n_nodes, inst.n_periods, inst.n_links
    fac_choices = [[0] if inst.w0[i] else list(range(1, T + 1)) + [None] for i in range(N)]
    link_choices = [[0] if inst.x0[l] else list(range(1, T + 1)) + [None] for l in range(L)]
    for fac in itertools.product(*fac_choices):
        for lnk in itertools.product(*link_choices):
            feasible = True
            for t in range(1, T + 1):
                fcost = sum(inst.open_cost[i, v] for i, v in enumerate(fac)
                            if v is not None and 1 <= v <= t)
                lcost = sum(inst.link_cost[l, v] for l, v in enumerate(lnk)
                            if v is not None and 1 <= v <= t)
                if fcost > inst.cum_budget_fac(t) + 1e-9:
                    feasible = False
                    break
                if lcost > inst.cum_budget_link(t) + 1e-9:
                    feasible = False
                    break
            if not feasible:
                continue
            yield state_from_plan(
                inst,
                {t: [i for i, v in enumerate(fac) if v == t] for t in range(1, T + 1)},
                {t: [l for l, v in enumerate(lnk) if v == t] for t in range(1, T + 1)})


def route_cost(inst: Instance, state: NetworkState, k: int, t: int) -> float:
    """Cheapest open route from k to an open facility by brute-force path
    enumeration (depth-first over simple paths)."""
    if state.W[k, t] >= 0.5:
        return 0.0
    best = math.inf

    def walk(node: int, cost: float, visited: set[int]):
        nonlocal best
        if cost >= best:
            return
        if state.W[node, t] >= 0.5:
            best = cost
            return
        for a in inst.out_arcs[node]:
            j = inst.arcs[a][1]
            if state.X[a, t] >= 0.5 and j not in visited:
                walk(j, cost + inst.routing_cost[a, t], visited | {j})

    walk(k, 0.0, {k})
    return best


def state_total_cost(inst: Instance, state: NetworkState) -> float:
    """Operating + demand-weighted routing cost of a schedule; inf when some
    client cannot be served in some period."""
    total = 0.0
    for t in inst.periods():
        total += float(inst.facility_op_cost[:, t] @ state.W[:, t])
        total += float(inst.link_op_cost[:, t] @ state.X[0::2, t])
        for k in range(inst.n_nodes):
            theta = route_cost(inst, state, k, t)
            if math.isinf(theta):
                return math.inf
            total += inst.demand[k, t] * theta
    return total


def brute_force_optimum(inst: Instance) -> float:
    """Exhaustive optimum of the whole problem; inf when infeasible."""
    best = math.inf
    for state in enumerate_schedules(inst):
        best = min(best, state_total_cost(inst, state))
    return best


def enumerate_period_states(inst: Instance, t: int):
    """All 0/1 (W_t, X_t) combinations for one period, as (W, X) arrays with
    both arc directions tied together."""
    N, L = inst.n_nodes, inst.n_links
    for wbits in itertools.product((0.0, 1.0), repeat=N):
        for lbits in itertools.product((0.0, 1.0), repeat=L):
            W = np.array(wbits)
            X = np.zeros(inst.n_arcs)
            for l, b in enumerate(lbits):
                X[2 * l] = X[2 * l + 1] = b
            yield W, X


def min_affordable_items(costs: list[float], budget: float, count: int) -> bool:
    """Can any ``count``-subset of items fit in the budget?  Enumerated."""
    for combo in itertools.combinations(costs, count):
        if sum(combo) <= budget + 1e-9:
            return True
    return False
