"""Benders master problem and the monolithic reference model.

The master keeps the opening/construction variables and budget rows, and
replaces routing by theta variables at a configurable granularity: one
theta per (client, period), per client, per period, or a single theta.
Optimality cuts for coarse granularities are demand-weighted sums of the
per-(client, period) cuts collected in one sub-problem sweep, which is a
sum of valid inequalities and hence valid.

With the first-period reformulation the period-1 arcs become directional
(at most one direction may open, the reverse opens free in period 2) so
that degree and facility-count rows can force serviceable first periods.
Those two rows are only added when period 0 is empty; with a pre-existing
network they are already implied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bnb import MipProblem
from .cuts import CoverCut, CutPool, FeasibilityCut, pool_add
from .instance import FullSolution, Instance, NetworkState, empty_state
from .lp import EQ, GE, LE, LpProblem
from .subproblem import OptimalityCut, shortest_path_tree

DISAGG_LEVELS = ("nodetime", "nodeonly", "timeonly", "single")
WS_CUT_KINDS = ("nona", "anone", "antwo")
CB_CUT_KINDS = ("cnona", "canone", "cantwo")


@dataclass
class MasterConfig:
    disaggregation: str = "nodetime"
    reformulation: bool = True
    cover_cuts: bool = True
    warmstart: bool = True
    warmstart_cut_kind: str = "nona"
    callback_cut_kind: str = "canone"

    def __post_init__(self):
        if self.disaggregation not in DISAGG_LEVELS:
            raise ValueError(f"disaggregation must be one of {DISAGG_LEVELS}")
        if self.warmstart_cut_kind not in WS_CUT_KINDS:
            raise ValueError(f"warmstart_cut_kind must be one of {WS_CUT_KINDS}")
        if self.callback_cut_kind not in CB_CUT_KINDS:
            raise ValueError(f"callback_cut_kind must be one of {CB_CUT_KINDS}")


@dataclass
class BlockCut:
    """Assembled theta-block row: demand-weighted sum of per-(k, t) cuts."""

    block: tuple
    coeffs: tuple           # ((var, coef), ...) canonical, theta var included
    rhs: float

    @property
    def kind(self) -> str:
        return "opt"

    def key(self) -> tuple:
        return ("blockcut", self.block, self.coeffs, self.rhs)


class MasterModel:
    def __init__(self, inst: Instance, cfg: MasterConfig):
        self.inst = inst
        self.cfg = cfg
        self.lp = LpProblem()
        self.pool = CutPool()
        self.integer_vars: list[int] = []
        N, T, L = inst.n_nodes, inst.n_periods, inst.n_links
        self.w_idx = np.full((N, T + 1), -1, dtype=int)
        self.u_idx = np.full((N, T + 1), -1, dtype=int)
        self.v_idx = np.full((L, T + 1), -1, dtype=int)
        self.xl_idx = np.full((L, T + 1), -1, dtype=int)
        self.xdir_idx = np.full(inst.n_arcs, -1, dtype=int)  # period-1 arcs, reformulation only
        self.theta_idx: dict[tuple, int] = {}
        self._build()
        self.n_base_rows = self.lp.n_rows

    # -- structure ---------------------------------------------------------

    def blocks(self) -> list[tuple]:
        inst, d = self.inst, self.cfg.disaggregation
        if d == "nodetime":
            return [(k, t) for t in inst.periods() for k in range(inst.n_nodes)]
        if d == "nodeonly":
            return [(k,) for k in range(inst.n_nodes)]
        if d == "timeonly":
            return [(t,) for t in inst.periods()]
        return [()]

    def block_of(self, k: int, t: int) -> tuple:
        d = self.cfg.disaggregation
        if d == "nodetime":
            return (k, t)
        if d == "nodeonly":
            return (k,)
        if d == "timeonly":
            return (t,)
        return ()

    def block_members(self, block: tuple) -> list[tuple[int, int]]:
        inst, d = self.inst, self.cfg.disaggregation
        if d == "nodetime":
            return [block]
        if d == "nodeonly":
            return [(block[0], t) for t in inst.periods()]
        if d == "timeonly":
            return [(k, block[0]) for k in range(inst.n_nodes)]
        return [(k, t) for t in inst.periods() for k in range(inst.n_nodes)]

    def x_var(self, a: int, t: int) -> int:
        """Master variable carrying arc a's openness at period t."""
        if t == 1 and self.cfg.reformulation:
            return int(self.xdir_idx[a])
        return int(self.xl_idx[a // 2, t])

    def _build(self):
        inst, cfg, lp = self.inst, self.cfg, self.lp
        N, T, L = inst.n_nodes, inst.n_periods, inst.n_links
        for t in inst.periods():
            for i in range(N):
                self.w_idx[i, t] = lp.add_var(obj=float(inst.facility_op_cost[i, t]), lo=0, hi=1)
                self.u_idx[i, t] = lp.add_var(obj=0.0, lo=0, hi=1)
            for l in range(L):
                self.v_idx[l, t] = lp.add_var(obj=0.0, lo=0, hi=1)
            if t == 1 and cfg.reformulation:
                for a in range(inst.n_arcs):
                    self.xdir_idx[a] = lp.add_var(obj=float(inst.link_op_cost[a // 2, 1]), lo=0, hi=1)
            else:
                for l in range(L):
                    self.xl_idx[l, t] = lp.add_var(obj=float(inst.link_op_cost[l, t]), lo=0, hi=1)
        self.integer_vars = [int(v) for v in self.w_idx[:, 1:].ravel() if v >= 0]
        if cfg.reformulation:
            self.integer_vars += [int(v) for v in self.xdir_idx]
        self.integer_vars += [int(v) for v in self.xl_idx[:, 1:].ravel() if v >= 0]
        for block in self.blocks():
            if cfg.disaggregation == "nodetime":
                k, t = block
                obj = float(inst.demand[k, t])
            else:
                obj = 1.0
            self.theta_idx[block] = lp.add_var(obj=obj, lo=0.0, hi=math.inf)

        for t in inst.periods():
            for i in range(N):  # facility opening dynamics
                coeffs = [(int(self.u_idx[i, t]), 1.0), (int(self.w_idx[i, t]), -1.0)]
                rhs = -float(inst.w0[i]) if t == 1 else 0.0
                if t > 1:
                    coeffs.append((int(self.w_idx[i, t - 1]), 1.0))
                lp.add_row(coeffs, EQ, rhs)
        for l in range(L):  # link opening dynamics
            a, b = 2 * l, 2 * l + 1
            if cfg.reformulation:
                lp.add_row(
                    [(int(self.v_idx[l, 1]), 1.0),
                     (int(self.xdir_idx[a]), -1.0), (int(self.xdir_idx[b]), -1.0)],
                    EQ, -float(inst.x0[l]))
                lp.add_row(
                    [(int(self.xdir_idx[a]), 1.0), (int(self.xdir_idx[b]), 1.0)], LE, 1.0)
                if T >= 2:
                    lp.add_row(
                        [(int(self.xdir_idx[a]), 1.0), (int(self.xdir_idx[b]), 1.0),
                         (int(self.v_idx[l, 2]), 1.0), (int(self.xl_idx[l, 2]), -1.0)],
                        EQ, 0.0)
                for t in range(3, T + 1):
                    lp.add_row(
                        [(int(self.xl_idx[l, t - 1]), 1.0), (int(self.v_idx[l, t]), 1.0),
                         (int(self.xl_idx[l, t]), -1.0)], EQ, 0.0)
            else:
                for t in inst.periods():
                    coeffs = [(int(self.v_idx[l, t]), 1.0), (int(self.xl_idx[l, t]), -1.0)]
                    rhs = -float(inst.x0[l]) if t == 1 else 0.0
                    if t > 1:
                        coeffs.append((int(self.xl_idx[l, t - 1]), 1.0))
                    lp.add_row(coeffs, EQ, rhs)
        if cfg.reformulation and inst.w0.sum() == 0 and inst.x0.sum() == 0:
            # new network: every node needs a facility or an out-arc in
            # period 1, and at least one facility must exist
            for i in range(N):
                coeffs = [(int(self.xdir_idx[a]), 1.0) for a in inst.out_arcs[i]]
                coeffs.append((int(self.w_idx[i, 1]), 1.0))
                lp.add_row(coeffs, GE, 1.0)
            lp.add_row([(int(self.w_idx[i, 1]), 1.0) for i in range(N)], GE, 1.0)
        for t in inst.periods():  # cumulative budgets
            lp.add_row(
                [(int(self.u_idx[i, v]), float(inst.open_cost[i, v]))
                 for v in range(1, t + 1) for i in range(N)
                 if inst.open_cost[i, v] != 0.0],
                LE, inst.cum_budget_fac(t))
            lp.add_row(
                [(int(self.v_idx[l, v]), float(inst.link_cost[l, v]))
                 for v in range(1, t + 1) for l in range(L)
                 if inst.link_cost[l, v] != 0.0],
                LE, inst.cum_budget_link(t))

    # -- solution access ----------------------------------------------------

    def extract_state(self, x: np.ndarray) -> NetworkState:
        inst = self.inst
        s = empty_state(inst)
        for t in inst.periods():
            for i in range(inst.n_nodes):
                s.W[i, t] = x[self.w_idx[i, t]]
                s.U[i, t] = x[self.u_idx[i, t]]
            for l in range(inst.n_links):
                s.V[l, t] = x[self.v_idx[l, t]]
            for a in range(inst.n_arcs):
                s.X[a, t] = x[self.x_var(a, t)]
        return s

    def theta_value(self, x: np.ndarray, block: tuple) -> float:
        return float(x[self.theta_idx[block]])

    def state_cost(self, state: NetworkState) -> float:
        """Operating cost part of the master objective for an extracted state."""
        inst = self.inst
        total = 0.0
        for t in inst.periods():
            total += float(inst.facility_op_cost[:, t] @ state.W[:, t])
            if t == 1 and self.cfg.reformulation:
                link_open = state.X[0::2, 1] + state.X[1::2, 1]
            else:
                link_open = state.X[0::2, t]
            total += float(inst.link_op_cost[:, t] @ link_open)
        return total

    # -- cut attachment -----------------------------------------------------

    def assemble_block_cut(self, block: tuple,
                           parts: list[tuple[OptimalityCut, float]]) -> BlockCut | None:
        acc: dict[int, float] = {}
        rhs = 0.0
        theta_var = self.theta_idx[block]
        for cut, weight in parts:
            if weight == 0.0 or cut.is_zero():
                continue
            rhs += weight * cut.constant
            for i in range(self.inst.n_nodes):
                if cut.gamma[i] != 0.0:
                    var = int(self.w_idx[i, cut.t])
                    acc[var] = acc.get(var, 0.0) + weight * float(cut.gamma[i])
            for a in range(self.inst.n_arcs):
                if cut.lam[a] != 0.0:
                    var = self.x_var(a, cut.t)
                    acc[var] = acc.get(var, 0.0) + weight * float(cut.lam[a])
        if rhs == 0.0 and not acc:
            return None  # theta >= 0 is already a bound
        coeffs = tuple(sorted([(int(theta_var), 1.0)] + list(acc.items())))
        return BlockCut(block, coeffs, rhs)

    def attach_cut(self, cut) -> int | None:
        """Add a cut row unless the pool already holds an identical one.

        Accepts :class:`OptimalityCut` (node-time granularity),
        :class:`BlockCut`, :class:`FeasibilityCut` and :class:`CoverCut`.
        Returns the new row id, or None when rejected.
        """
        if isinstance(cut, OptimalityCut):
            if self.cfg.disaggregation != "nodetime":
                raise ValueError("per-(k,t) cuts need a BlockCut at this granularity")
            block_cut = self.assemble_block_cut((cut.k, cut.t), [(cut, 1.0)])
            if block_cut is None or not pool_add(self.pool, cut):
                return None
            coeffs, sense, rhs = list(block_cut.coeffs), GE, block_cut.rhs
        elif isinstance(cut, BlockCut):
            if not pool_add(self.pool, cut):
                return None
            coeffs, sense, rhs = list(cut.coeffs), GE, cut.rhs
        elif isinstance(cut, FeasibilityCut):
            if not pool_add(self.pool, cut):
                return None
            coeffs = [(int(self.w_idx[i, cut.t]), 1.0) for i in cut.nodes]
            coeffs += [(self.x_var(a, cut.t), 1.0) for a in cut.arcs]
            sense, rhs = GE, 1.0
        elif isinstance(cut, CoverCut):
            if not pool_add(self.pool, cut):
                return None
            idx = self.u_idx if cut.kind_items == "facility" else self.v_idx
            coeffs = [(int(idx[i, v]), 1.0)
                      for v in range(1, cut.t + 1) for i in cut.items]
            sense, rhs = LE, float(cut.bound)
        else:
            raise TypeError(f"unknown cut type {type(cut)!r}")
        return self.lp.add_row(coeffs, sense, rhs)


def build_master(inst: Instance, cfg: MasterConfig) -> MasterModel:
    return MasterModel(inst, cfg)


# ---------------------------------------------------------------------------
# monolithic model
# ---------------------------------------------------------------------------

def build_monolithic(inst: Instance) -> MipProblem:
    """Exact MILP of the full model; routing variables stay continuous."""
    lp = LpProblem()
    N, T, L = inst.n_nodes, inst.n_periods, inst.n_links
    w_idx = np.full((N, T + 1), -1, dtype=int)
    u_idx = np.full((N, T + 1), -1, dtype=int)
    v_idx = np.full((L, T + 1), -1, dtype=int)
    xl_idx = np.full((L, T + 1), -1, dtype=int)
    z_idx = np.full((inst.n_arcs, N, T + 1), -1, dtype=int)
    for t in inst.periods():
        for i in range(N):
            w_idx[i, t] = lp.add_var(obj=float(inst.facility_op_cost[i, t]), lo=0, hi=1)
            u_idx[i, t] = lp.add_var(obj=0.0, lo=0, hi=1)
        for l in range(L):
            v_idx[l, t] = lp.add_var(obj=0.0, lo=0, hi=1)
            xl_idx[l, t] = lp.add_var(obj=float(inst.link_op_cost[l, t]), lo=0, hi=1)
        for k in range(N):
            for a in range(inst.n_arcs):
                hi = 0.0 if inst.arcs[a][1] == k else math.inf
                z_idx[a, k, t] = lp.add_var(
                    obj=float(inst.routing_cost[a, t] * inst.demand[k, t]), lo=0.0, hi=hi)
    for t in inst.periods():
        for k in range(N):
            coeffs = [(int(z_idx[a, k, t]), 1.0) for a in inst.out_arcs[k]]
            coeffs.append((int(w_idx[k, t]), 1.0))
            lp.add_row(coeffs, GE, 1.0)
            for i in range(N):
                if i == k:
                    continue
                coeffs = [(int(z_idx[a, k, t]), 1.0) for a in inst.in_arcs[i]]
                coeffs += [(int(z_idx[a, k, t]), -1.0) for a in inst.out_arcs[i]]
                coeffs.append((int(w_idx[i, t]), -1.0))
                lp.add_row(coeffs, LE, 0.0)
            for a in range(inst.n_arcs):
                if inst.arcs[a][1] == k:
                    continue  # fixed to zero by bounds
                lp.add_row([(int(z_idx[a, k, t]), 1.0), (int(xl_idx[a // 2, t]), -1.0)],
                           LE, 0.0)
        for i in range(N):
            coeffs = [(int(u_idx[i, t]), 1.0), (int(w_idx[i, t]), -1.0)]
            rhs = -float(inst.w0[i]) if t == 1 else 0.0
            if t > 1:
                coeffs.append((int(w_idx[i, t - 1]), 1.0))
            lp.add_row(coeffs, EQ, rhs)
        for l in range(L):
            coeffs = [(int(v_idx[l, t]), 1.0), (int(xl_idx[l, t]), -1.0)]
            rhs = -float(inst.x0[l]) if t == 1 else 0.0
            if t > 1:
                coeffs.append((int(xl_idx[l, t - 1]), 1.0))
            lp.add_row(coeffs, EQ, rhs)
        lp.add_row(
            [(int(u_idx[i, v]), float(inst.open_cost[i, v]))
             for v in range(1, t + 1) for i in range(N) if inst.open_cost[i, v] != 0.0],
            LE, inst.cum_budget_fac(t))
        lp.add_row(
            [(int(v_idx[l, v]), float(inst.link_cost[l, v]))
             for v in range(1, t + 1) for l in range(L) if inst.link_cost[l, v] != 0.0],
            LE, inst.cum_budget_link(t))
    integer_vars = [int(v) for v in w_idx[:, 1:].ravel()]
    integer_vars += [int(v) for v in xl_idx[:, 1:].ravel()]
    varmaps = {"w": w_idx, "u": u_idx, "v": v_idx, "xl": xl_idx, "z": z_idx}
    return MipProblem(lp, integer_vars, varmaps)


def monolithic_state(inst: Instance, mip: MipProblem, x: np.ndarray) -> NetworkState:
    s = empty_state(inst)
    vm = mip.varmaps
    for t in inst.periods():
        s.W[:, t] = x[vm["w"][:, t]]
        s.U[:, t] = x[vm["u"][:, t]]
        s.V[:, t] = x[vm["v"][:, t]]
        s.X[0::2, t] = x[vm["xl"][:, t]]
        s.X[1::2, t] = x[vm["xl"][:, t]]
    return s


def monolithic_solution(inst: Instance, mip: MipProblem, x: np.ndarray,
                        objective: float) -> FullSolution:
    s = monolithic_state(inst, mip, x)
    vm = mip.varmaps
    Z = np.zeros((inst.n_arcs, inst.n_nodes, inst.n_periods + 1))
    theta = np.zeros((inst.n_nodes, inst.n_periods + 1))
    for t in inst.periods():
        for k in range(inst.n_nodes):
            Z[:, k, t] = x[vm["z"][:, k, t]]
            theta[k, t] = float(inst.routing_cost[:, t] @ Z[:, k, t])
    return FullSolution(s, Z, theta, objective)


def reconstruct_solution(inst: Instance, state: NetworkState) -> FullSolution:
    """Shortest-path routing for an integral state, in undirected form.

    Directional period-1 states from the reformulation are canonicalised to
    the original model's space (both directions open) first, which neither
    changes cost nor feasibility.
    """
    s = state.copy()
    for l in range(inst.n_links):
        a, b = 2 * l, 2 * l + 1
        both = max(s.X[a, 1], s.X[b, 1])
        s.X[a, 1] = s.X[b, 1] = both
    Z = np.zeros((inst.n_arcs, inst.n_nodes, inst.n_periods + 1))
    theta = np.zeros((inst.n_nodes, inst.n_periods + 1))
    for t in inst.periods():
        open_arcs = s.X[:, t] >= 0.5
        for k in range(inst.n_nodes):
            if s.W[k, t] >= 0.5:
                continue
            dist, parent = shortest_path_tree(inst, inst.routing_cost[:, t], open_arcs, k)
            best, best_i = math.inf, -1
            for i in range(inst.n_nodes):
                if s.W[i, t] >= 0.5 and dist[i] < best:
                    best, best_i = dist[i], i
            if best_i < 0:
                raise ValueError(f"state cannot serve client {k} at period {t}")
            theta[k, t] = best
            node = best_i
            while node != k:
                arc = parent[node]
                Z[arc, k, t] = 1.0
                node = inst.arcs[arc][0]
    objective = 0.0
    for t in inst.periods():
        objective += float(inst.facility_op_cost[:, t] @ s.W[:, t])
        objective += float(inst.link_op_cost[:, t] @ s.X[0::2, t])
        objective += float(inst.demand[:, t] @ theta[:, t])
    return FullSolution(s, Z, theta, objective)
