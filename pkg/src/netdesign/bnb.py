"""Deterministic branch-and-bound over binary variables, and the two
Benders driver loops built on top of it.

The tree is explored depth-first (round-down child first) until the first
incumbent, then by best bound.  Branching picks the most fractional
binary, ties broken by lowest index.  At integer-feasible node solutions
an optional callback may append rows to the shared LP (lazy cuts); the
node is then re-solved, and a candidate becomes the incumbent only once
the callback returns nothing.

``benders_branch_cut`` runs the cut loop inside the tree via the callback;
``iterative_benders`` alternates full MIP solves with sub-problem sweeps.
Both accept the same master configuration and reach the same optimum.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, NetworkState
from .lp import Basis, LpProblem, LpResult, lp_solve

TOL_INT = 1e-6
CUT_VIOLATION = 1e-6


@dataclass
class MipProblem:
    lp: LpProblem
    integer_vars: list[int]
    varmaps: dict | None = None


@dataclass
class Limits:
    time: float = math.inf
    gap: float = 1e-6
    nodes: int | None = None


@dataclass
class MipResult:
    status: str                    # 'optimal' | 'feasible' | 'infeasible' | 'time_limit'
    x: np.ndarray | None
    objective: float | None
    bound: float
    gap: float
    nodes: int
    cuts_opt: int = 0
    cuts_feas: int = 0
    wall_time: float = 0.0
    subproblems_solved: int = 0
    subproblem_time: float = 0.0
    outer_iterations: int = 0


def _relative_gap(incumbent: float | None, bound: float) -> float:
    if incumbent is None:
        return math.inf
    return (incumbent - bound) / max(1e-10, abs(incumbent))


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    overrides: dict = field(compare=False)
    basis: Basis | None = field(compare=False)


def mip_solve(p: MipProblem, callback=None, limits: Limits | None = None,
              node_log=None) -> MipResult:
    """Solve the binary MIP; see the module docstring for the search rules.

    ``callback(x) -> list[row_id]`` may append violated rows to ``p.lp`` for
    an integer-feasible candidate; returning an empty list accepts it.
    """
    limits = limits or Limits()
    t0 = time.monotonic()
    lp0 = p.lp
    base_lo = np.array(lp0.lo, dtype=float)
    base_hi = np.array(lp0.hi, dtype=float)
    integer_vars = sorted(p.integer_vars)

    incumbent_x = None
    incumbent = None
    seq = 0
    nodes_done = 0
    stack: list[_Node] = [_Node(-math.inf, seq, 0, {}, None)]
    heap: list[_Node] = []

    def log(msg: str):
        if node_log is not None:
            node_log.write(msg + "\n")

    def global_bound() -> float:
        cands = []
        if heap:
            cands.append(heap[0].bound)  # heap is ordered by bound
        if stack:
            cands.extend(n.bound for n in stack)
        if incumbent is not None:
            cands.append(incumbent)
        return min(cands) if cands else math.inf

    status = None
    while True:
        if incumbent is None and stack:
            node = stack.pop()
        elif heap:
            node = heapq.heappop(heap)
        elif stack:
            node = stack.pop()
        else:
            break
        if incumbent is not None and node.bound >= incumbent - 1e-9 * (1 + abs(incumbent)):
            continue
        if time.monotonic() - t0 > limits.time or (
                limits.nodes is not None and nodes_done >= limits.nodes):
            heapq.heappush(heap, node)  # keep it in the bound computation
            status = "time_limit"
            break
        nodes_done += 1

        lo = base_lo.copy()
        hi = base_hi.copy()
        if len(lo) < lp0.n_vars:  # callback rows never add vars, but be safe
            lo = np.array(lp0.lo, dtype=float)
            hi = np.array(lp0.hi, dtype=float)
        for var, (vlo, vhi) in node.overrides.items():
            lo[var], hi[var] = vlo, vhi
        basis = node.basis
        while True:
            res = lp_solve(lp0, lo, hi, basis)
            if res.status == "unbounded":
                raise RuntimeError("relaxation unbounded; master should be bounded")
            if res.status == "infeasible":
                log(f"node={nodes_done} depth={node.depth} infeasible")
                break
            obj = res.objective
            if incumbent is not None and obj >= incumbent - 1e-9 * (1 + abs(incumbent)):
                log(f"node={nodes_done} depth={node.depth} pruned bound={obj:.6f}")
                break
            frac_var, frac_amt = -1, 0.0
            for j in integer_vars:
                f = abs(res.x[j] - round(res.x[j]))
                score = min(f, 1 - f) if f <= 0.5 else 0.5
                if f > TOL_INT and score > frac_amt + 1e-12:
                    frac_var, frac_amt = j, score
            if frac_var < 0:
                if callback is not None:
                    added = callback(res.x)
                    if added:
                        log(f"node={nodes_done} depth={node.depth} cuts+={len(added)}")
                        basis = res.basis
                        continue  # re-solve this node with the new rows
                if incumbent is None or obj < incumbent:
                    incumbent = obj
                    incumbent_x = res.x.copy()
                    log(f"node={nodes_done} depth={node.depth} incumbent={obj:.6f}")
                    if stack:  # switch to best-bound exploration
                        for n in stack:
                            heapq.heappush(heap, n)
                        stack.clear()
                break
            fval = res.x[frac_var]
            down = dict(node.overrides)
            down[frac_var] = (lo[frac_var], float(np.floor(fval)))
            up = dict(node.overrides)
            up[frac_var] = (float(np.ceil(fval)), hi[frac_var])
            children = [
                _Node(obj, seq + 1, node.depth + 1, down, res.basis),
                _Node(obj, seq + 2, node.depth + 1, up, res.basis),
            ]
            seq += 2
            if incumbent is None:
                stack.append(children[1])
                stack.append(children[0])  # round-down child explored first
            else:
                heapq.heappush(heap, children[0])
                heapq.heappush(heap, children[1])
            log(f"node={nodes_done} depth={node.depth} branch x{frac_var}={fval:.4f} bound={obj:.6f}")
            break

        if incumbent is not None and status is None:
            bound = global_bound()
            if _relative_gap(incumbent, bound) <= limits.gap:
                status = "optimal"
                break

    bound = global_bound()
    if status is None:
        status = "optimal" if incumbent is not None else "infeasible"
    if status == "optimal":
        bound = incumbent if incumbent is not None else bound
    gap = _relative_gap(incumbent, bound) if status != "optimal" else 0.0
    return MipResult(status, incumbent_x, incumbent,
                     bound if incumbent is not None or status != "infeasible" else math.inf,
                     gap, nodes_done, wall_time=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# Benders drivers
# ---------------------------------------------------------------------------

def _integral_sweep(inst: Instance, model, state: NetworkState,
                    theta_of: dict[tuple, float], cut_kind: str) -> tuple[list[int], int]:
    """One sub-problem sweep at an integral master candidate.

    Adds feasibility cuts first (and returns early if any), then optimality
    cuts for violated theta blocks per ``cut_kind``.  Returns (row ids,
    blocks evaluated).
    """
    from .subproblem import (SubproblemInfeasible, cut_from_lp, cut_gamma_heavy,
                             cut_lambda_heavy, shortest_distances, solve_subproblem)
    from .cuts import feasibility_cut_min_cut

    rows: list[int] = []
    blocks = model.blocks()
    values: dict[tuple[int, int], float] = {}
    dists: dict[tuple[int, int], object] = {}
    for t in inst.periods():
        for k in range(inst.n_nodes):
            dist = shortest_distances(inst, state, k, t)
            theta = solve_subproblem(inst, state, k, t, dist)
            if math.isinf(theta):
                cut = feasibility_cut_min_cut(inst, state, k, t)
                assert cut is not None
                row = model.attach_cut(cut)
                if row is not None:
                    rows.append(row)
            else:
                values[(k, t)] = theta
                dists[(k, t)] = dist
    if rows:
        return rows, len(blocks)

    for block in blocks:
        members = model.block_members(block)
        if model.cfg.disaggregation == "nodetime":
            target = values[members[0]]
            weights = [1.0]
        else:
            weights = [float(inst.demand[k, t]) for (k, t) in members]
            target = sum(w * values[(k, t)] for (k, t), w in zip(members, weights))
        if theta_of[block] >= target - CUT_VIOLATION:
            continue
        for maker in _cut_makers(cut_kind):
            parts = []
            for (k, t), w in zip(members, weights):
                if w == 0.0 or state.W[k, t] >= 0.5:
                    continue  # trivial: the client hosts a facility
                try:
                    parts.append((maker(inst, state, k, t, dists[(k, t)]), w))
                except SubproblemInfeasible:
                    continue
            if not parts:
                continue
            if model.cfg.disaggregation == "nodetime":
                row = model.attach_cut(parts[0][0])
            else:
                block_cut = model.assemble_block_cut(block, parts)
                row = model.attach_cut(block_cut) if block_cut is not None else None
            if row is not None:
                rows.append(row)
    return rows, len(blocks)


def _cut_makers(cut_kind: str) -> list:
    from .subproblem import cut_from_lp, cut_gamma_heavy, cut_lambda_heavy

    def lp_maker(inst, state, k, t, dist):
        return cut_from_lp(inst, state, k, t)

    if cut_kind in ("cnona", "nona"):
        return [lp_maker]
    if cut_kind in ("canone", "anone"):
        return [cut_lambda_heavy]
    return [cut_lambda_heavy, cut_gamma_heavy]


def benders_branch_cut(inst: Instance, cfg, limits: Limits | None = None,
                       node_log=None):
    """Branch-and-cut Benders: lazy sub-problem cuts at incumbent candidates.

    Returns (MipResult, MasterModel); the result's cut counters come from
    the master's pool and include warm-start cuts.
    """
    from .master import build_master
    from .warmstart import warm_start

    limits = limits or Limits()
    t0 = time.monotonic()
    model = build_master(inst, cfg)
    counters = {"subproblems": 0, "sp_time": 0.0}
    if cfg.warmstart:
        trace = warm_start(inst, model, cfg, limits)
        counters["subproblems"] += trace.subproblems_solved
        counters["sp_time"] += trace.subproblem_time

    def callback(x: np.ndarray) -> list[int]:
        state = model.extract_state(x)
        theta_of = {b: model.theta_value(x, b) for b in model.blocks()}
        ts = time.monotonic()
        rows, n_blocks = _integral_sweep(inst, model, state, theta_of, cfg.callback_cut_kind)
        counters["subproblems"] += n_blocks
        counters["sp_time"] += time.monotonic() - ts
        return rows

    mip = MipProblem(model.lp, model.integer_vars)
    remaining = Limits(limits.time - (time.monotonic() - t0), limits.gap, limits.nodes)
    res = mip_solve(mip, callback, remaining, node_log)
    res.cuts_opt = model.pool.n_optimality
    res.cuts_feas = model.pool.n_feasibility
    res.subproblems_solved = counters["subproblems"]
    res.subproblem_time = counters["sp_time"]
    res.wall_time = time.monotonic() - t0
    return res, model


def iterative_benders(inst: Instance, cfg, limits: Limits | None = None,
                      max_outer: int = 500):
    """Solve master to optimality, sweep sub-problems, add cuts, repeat."""
    from .master import build_master
    from .warmstart import warm_start

    limits = limits or Limits()
    t0 = time.monotonic()
    model = build_master(inst, cfg)
    counters = {"subproblems": 0, "sp_time": 0.0}
    if cfg.warmstart:
        trace = warm_start(inst, model, cfg, limits)
        counters["subproblems"] += trace.subproblems_solved
        counters["sp_time"] += trace.subproblem_time

    total_nodes = 0
    res = None
    for outer in range(1, max_outer + 1):
        elapsed = time.monotonic() - t0
        remaining = Limits(limits.time - elapsed, limits.gap, limits.nodes)
        if remaining.time <= 0:
            break
        mip = MipProblem(model.lp, model.integer_vars)
        res = mip_solve(mip, None, remaining)
        total_nodes += res.nodes
        res.outer_iterations = outer
        if res.status in ("infeasible", "time_limit"):
            break
        state = model.extract_state(res.x)
        theta_of = {b: model.theta_value(res.x, b) for b in model.blocks()}
        ts = time.monotonic()
        rows, n_blocks = _integral_sweep(inst, model, state, theta_of, cfg.callback_cut_kind)
        counters["subproblems"] += n_blocks
        counters["sp_time"] += time.monotonic() - ts
        if not rows:
            break
    else:
        if res is not None:
            res.status = "feasible"
    assert res is not None
    res.nodes = total_nodes
    res.cuts_opt = model.pool.n_optimality
    res.cuts_feas = model.pool.n_feasibility
    res.subproblems_solved = counters["subproblems"]
    res.subproblem_time = counters["sp_time"]
    res.wall_time = time.monotonic() - t0
    return res, model
