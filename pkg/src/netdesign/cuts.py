"""Feasibility cuts, budget cover inequalities and the cut pool.

A sub-problem (k, t) is serviceable iff one unit of demand at k can be
absorbed by facility capacities W over arc capacities X.  We answer that
with a max-flow computation (fractional states included); when the flow
falls short, the source side S of the min cut yields the cut

    sum_{i in S} W_it + sum_{(a,b) leaving S} X_abt >= 1,

which every serviceable state satisfies and the generating state violates.

Cover inequalities look at the cumulative construction sums: when the
fractional number of built items S cannot actually be afforded (the
cheapest ceil(S) items already bust the budget), at most floor(S) of them
can be built, and the cut lifts in every costlier item.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, NetworkState

TOL_FLOW = 1e-9
TOL_INT = 1e-6


@dataclass
class FeasibilityCut:
    t: int
    nodes: list[int]        # source-side set S, contains k
    arcs: list[int]         # arc ids leaving S

    def key(self) -> tuple:
        return ("feas", self.t, tuple(self.nodes), tuple(self.arcs))

    @property
    def kind(self) -> str:
        return "feas"


@dataclass
class CoverCut:
    kind_items: str         # 'facility' | 'link'
    t: int
    items: list[int]        # cover members plus lifted items
    bound: int

    def key(self) -> tuple:
        return ("cover", self.kind_items, self.t, tuple(self.items), self.bound)

    @property
    def kind(self) -> str:
        return "cover"


@dataclass
class CutPool:
    cuts: list = field(default_factory=list)
    _keys: set = field(default_factory=set)
    n_optimality: int = 0   # M
    n_feasibility: int = 0  # P (feasibility + cover)

    def __contains__(self, cut) -> bool:
        return cut.key() in self._keys

    def dump(self) -> str:
        """One cut per line: kind, identifying indices, sparse coefficients."""
        lines = []
        for c in self.cuts:
            if isinstance(c, FeasibilityCut):
                lines.append(f"feas t={c.t} W{c.nodes} X{c.arcs} >= 1")
            elif isinstance(c, CoverCut):
                lines.append(f"cover {c.kind_items} t={c.t} items{c.items} <= {c.bound}")
            else:
                gam = {i: round(float(g), 9) for i, g in enumerate(c.gamma) if g}
                lam = {a: round(float(v), 9) for a, v in enumerate(c.lam) if v}
                lines.append(f"opt k={c.k} t={c.t} const={c.constant!r} gamma{gam} lambda{lam}")
        return "\n".join(lines)


def pool_add(pool: CutPool, cut) -> bool:
    """Insert unless a coefficient-identical cut is already stored."""
    key = cut.key()
    if key in pool._keys:
        return False
    pool._keys.add(key)
    pool.cuts.append(cut)
    if cut.kind == "opt":
        pool.n_optimality += 1
    else:
        pool.n_feasibility += 1
    return True


# ---------------------------------------------------------------------------
# max-flow feasibility check
# ---------------------------------------------------------------------------

class _FlowNet:
    def __init__(self, n: int):
        self.n = n
        self.head: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add(self, u: int, v: int, cap: float):
        self.adj[u].append(len(self.head))
        self.head.append(v)
        self.cap.append(cap)
        self.adj[v].append(len(self.head))
        self.head.append(u)
        self.cap.append(0.0)

    def bfs_path(self, s: int, t: int):
        prev = [-1] * self.n
        prev_edge = [-1] * self.n
        prev[s] = s
        q = deque([s])
        while q:
            u = q.popleft()
            if u == t:
                break
            for e in self.adj[u]:
                v = self.head[e]
                if prev[v] < 0 and self.cap[e] > TOL_FLOW:
                    prev[v] = u
                    prev_edge[v] = e
                    q.append(v)
        if prev[t] < 0:
            return None
        path = []
        v = t
        while v != s:
            path.append(prev_edge[v])
            v = prev[v]
        return path

    def max_flow(self, s: int, t: int) -> float:
        total = 0.0
        while True:
            path = self.bfs_path(s, t)
            if path is None:
                return total
            aug = min(self.cap[e] for e in path)
            for e in path:
                self.cap[e] -= aug
                self.cap[e ^ 1] += aug
            total += aug

    def reachable(self, s: int) -> set[int]:
        seen = {s}
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self.adj[u]:
                v = self.head[e]
                if v not in seen and self.cap[e] > TOL_FLOW:
                    seen.add(v)
                    q.append(v)
        return seen


def service_flow(inst: Instance, state: NetworkState, k: int, t: int) -> tuple[float, _FlowNet]:
    """Max demand of client k absorbable at period t (clamped to 1)."""
    N = inst.n_nodes
    src, snk = N, N + 1
    net = _FlowNet(N + 2)
    net.add(src, k, 1.0)
    for a, (i, j) in enumerate(inst.arcs):
        if j != k and state.X[a, t] > TOL_FLOW:
            net.add(i, j, float(state.X[a, t]))
    for i in range(N):
        if state.W[i, t] > TOL_FLOW:
            net.add(i, snk, float(state.W[i, t]))
    return net.max_flow(src, snk), net


def feasibility_cut_min_cut(inst: Instance, state: NetworkState, k: int, t: int,
                            tol: float = 1e-7) -> FeasibilityCut | None:
    """None when (k, t) can be fully served; otherwise the min-cut cut,
    violated by ``state`` and satisfied by every serviceable state."""
    value, net = service_flow(inst, state, k, t)
    if value >= 1.0 - tol:
        return None
    reach = net.reachable(inst.n_nodes)  # residual reachability from the source
    S = sorted(i for i in reach if i < inst.n_nodes)
    assert k in reach
    in_S = [False] * inst.n_nodes
    for i in S:
        in_S[i] = True
    arcs_out = [a for a, (i, j) in enumerate(inst.arcs) if in_S[i] and not in_S[j]]
    return FeasibilityCut(t, S, arcs_out)


# ---------------------------------------------------------------------------
# budget cover inequalities
# ---------------------------------------------------------------------------

def _cover_for(sum_built: float, costs: list[tuple[float, int]], budget: float,
               tol_int: float) -> tuple[list[int], int] | None:
    frac = sum_built - math.floor(sum_built)
    if min(frac, 1.0 - frac) <= tol_int:
        return None
    ceil_s = math.floor(sum_built) + 1
    if len(costs) < ceil_s:
        return None
    ordered = sorted(costs)
    cheapest = ordered[:ceil_s]
    if sum(c for c, _ in cheapest) <= budget + 1e-9:
        return None
    threshold = cheapest[-1][0]
    members = [i for _, i in cheapest]
    members += [i for c, i in ordered[ceil_s:] if c > threshold]
    return sorted(members), math.floor(sum_built)


def budget_cover_cuts(inst: Instance, state: NetworkState, t: int,
                      tol_int: float = TOL_INT) -> list[CoverCut]:
    """Separate facility and link cover cuts at period t from a fractional
    state.  Item costs use the cheapest construction period up to t, which
    keeps the cut valid under time-varying costs."""
    out: list[CoverCut] = []
    fac_items = [
        (float(inst.open_cost[i, 1 : t + 1].min()), i)
        for i in range(inst.n_nodes) if inst.w0[i] == 0.0
    ]
    sum_u = float(state.U[:, 1 : t + 1].sum())
    got = _cover_for(sum_u, fac_items, inst.cum_budget_fac(t), tol_int)
    if got is not None:
        out.append(CoverCut("facility", t, got[0], got[1]))
    link_items = [
        (float(inst.link_cost[l, 1 : t + 1].min()), l)
        for l in range(inst.n_links) if inst.x0[l] == 0.0
    ]
    sum_v = float(state.V[:, 1 : t + 1].sum())
    got = _cover_for(sum_v, link_items, inst.cum_budget_link(t), tol_int)
    if got is not None:
        out.append(CoverCut("link", t, got[0], got[1]))
    return out
