import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netdesign.instance import Instance, empty_state


def fig1_instance(demand_at_source: float = 0.0, n_periods: int = 1) -> Instance:
    """The five-node example network: source A, open facilities D and E,
    open links A-B (cost 1), B-D (cost 9), C-E (cost 1); B-C (cost 1) closed."""
    links = [(0, 1), (1, 2), (1, 3), (2, 4)]
    T, N, L = n_periods, 5, 4
    rho = np.zeros((2 * L, T + 1))
    for l, r in enumerate([1.0, 1.0, 9.0, 1.0]):
        rho[2 * l, 1:] = rho[2 * l + 1, 1:] = r
    demand = np.zeros((N, T + 1))
    demand[0, 1:] = demand_at_source
    return Instance(
        n_nodes=N, n_periods=T, links=links,
        demand=demand,
        open_cost=np.ones((N, T + 1)) * 10.0,
        link_cost=np.ones((L, T + 1)) * 5.0,
        routing_cost=rho,
        facility_op_cost=np.ones((N, T + 1)),
        link_op_cost=np.ones((L, T + 1)) * 0.5,
        budget_fac=np.zeros(T + 1),
        budget_link=np.zeros(T + 1),
        w0=np.zeros(N), x0=np.zeros(L),
    )


def fig1_state(inst: Instance):
    """Generating state: D and E open, links A-B, B-D, C-E open, B-C closed."""
    st = empty_state(inst)
    for t in inst.periods():
        st.W[3, t] = st.W[4, t] = 1.0
        for l in (0, 2, 3):
            st.X[2 * l, t] = st.X[2 * l + 1, t] = 1.0
    return st


ARC_BC = 2  # arc id of (B -> C) == (1 -> 2)


@pytest.fixture
def fig1():
    inst = fig1_instance()
    return inst, fig1_state(inst)
