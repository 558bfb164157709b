"""Root-LP cut loop: tighten the master relaxation before integer search.

Each iteration solves the master LP, checks every sub-problem for
serviceability on the fractional state (max-flow), and prices violated
theta blocks with the fractional routing LPs.  Optimality cuts come either
from the LP duals directly, or analytically: the optimal flow decomposes
into paths whose binding fractional arcs/terminal facilities (the
restricting factors) carry the only unknown duals.  Zero path reduced
costs pin those unknowns down -- a square linear solve when there are
exactly n_paths - 1 factors, a small LP minimising gamma_k otherwise --
and the remaining duals follow by shortest-path propagation over the
partially open graph.  Every recovered cut is validated against the
fractional objective; failures fall back to the LP-dual cut and are
counted in the trace.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cuts import budget_cover_cuts, feasibility_cut_min_cut, service_flow
from .instance import Instance, NetworkState
from .lp import EQ, Basis, LpProblem, LpResult, lp_solve
from .subproblem import (INF, OptimalityCut, SubproblemInfeasible, check_cut,
                         build_subproblem_lp, cut_from_result, dijkstra)

TOL = 1e-9
FRAC_TOL = 1e-6
CUT_VIOLATION_WS = 1e-6


class RecoveryFailed(Exception):
    """Analytic dual recovery did not produce a dual-optimal vector."""


@dataclass
class Path:
    arcs: list[int]
    length: float
    dest: int
    flow: float


@dataclass
class PathDecomposition:
    k: int
    t: int
    paths: list[Path]
    factors: list[tuple[str, int]]   # ('arc', a) or ('fac', i), the set C


@dataclass
class FlowResult:
    Z: np.ndarray
    objective: float
    result: LpResult


@dataclass
class WarmStartTrace:
    bounds: list[float] = field(default_factory=list)
    cuts_opt: list[int] = field(default_factory=list)
    cuts_feas: list[int] = field(default_factory=list)
    cuts_cover: list[int] = field(default_factory=list)
    termination: str = ""
    subproblems_solved: int = 0
    subproblem_time: float = 0.0
    recover_fallbacks: int = 0

    def to_csv(self) -> str:
        lines = ["iteration,bound,cuts_opt,cuts_feas,cuts_cover"]
        for i, b in enumerate(self.bounds, start=1):
            lines.append(f"{i},{b!r},{self.cuts_opt[i-1]},{self.cuts_feas[i-1]},"
                         f"{self.cuts_cover[i-1]}")
        return "\n".join(lines)


def fractional_subproblem(inst: Instance, state: NetworkState, k: int, t: int,
                          cache: dict | None = None) -> FlowResult:
    """Solve the (k, t) routing LP at a fractional state."""
    if cache is not None and (k, t) in cache:
        p, basis = cache[(k, t)]
        p.rows[0] = (p.rows[0][0], p.rows[0][1], float(state.W[k, t]) - 1.0)
        pos = 1
        for i in range(inst.n_nodes):
            if i == k:
                continue
            p.rows[pos] = (p.rows[pos][0], p.rows[pos][1], float(state.W[i, t]))
            pos += 1
        for a in range(inst.n_arcs):
            p.rows[pos + a] = (p.rows[pos + a][0], p.rows[pos + a][1], float(state.X[a, t]))
    else:
        p, basis = build_subproblem_lp(inst, state.W[:, t], state.X[:, t], k, t), None
    res = lp_solve(p, basis=basis)
    if res.status == "infeasible":
        raise SubproblemInfeasible(f"sub-problem ({k},{t})")
    if res.status != "optimal":
        raise RuntimeError(f"unexpected sub-problem status {res.status}")
    if cache is not None:
        cache[(k, t)] = (p, res.basis)
    return FlowResult(res.x.copy(), res.objective, res)


def decompose_flow(Z: np.ndarray, inst: Instance, state: NetworkState,
                   k: int, t: int) -> PathDecomposition:
    """Standard path decomposition of a feasible sub-problem flow.

    Repeatedly walks a positive-flow path from the source to a node with
    remaining absorption and subtracts the bottleneck.  Zero-cost residual
    cycles are cancelled with a warning.  Restricting factors are the arcs
    at capacity with fractional openness and the terminal facilities at
    capacity with fractional openness.
    """
    resid = Z.copy()
    absorb = np.zeros(inst.n_nodes)
    for i in range(inst.n_nodes):
        if i == k:
            continue
        inflow = sum(resid[a] for a in inst.in_arcs[i])
        outflow = sum(resid[a] for a in inst.out_arcs[i])
        absorb[i] = max(0.0, inflow - outflow)
    paths: list[Path] = []
    guard = 0
    while True:
        guard += 1
        if guard > 4 * inst.n_arcs + 8:
            raise RecoveryFailed("path decomposition did not terminate")
        out_total = sum(resid[a] for a in inst.out_arcs[k])
        if out_total <= FRAC_TOL:
            break
        arcs: list[int] = []
        seen = {k: 0}
        node = k
        cycled = False
        while absorb[node] <= FRAC_TOL or node == k:
            nxt = -1
            for a in inst.out_arcs[node]:
                if resid[a] > FRAC_TOL:
                    nxt = a
                    break
            if nxt < 0:
                raise RecoveryFailed(f"flow stuck at node {node}")
            node2 = inst.arcs[nxt][1]
            arcs.append(nxt)
            if node2 in seen:
                # zero-cost cycle: cancel its minimum flow and restart the walk
                cyc = arcs[seen[node2]:]
                cancel = min(resid[a] for a in cyc)
                for a in cyc:
                    resid[a] -= cancel
                warnings.warn("cancelled a residual routing cycle", stacklevel=2)
                cycled = True
                break
            seen[node2] = len(arcs)
            node = node2
        if cycled:
            continue
        bottleneck = min(min(resid[a] for a in arcs), absorb[node])
        if bottleneck <= FRAC_TOL:
            raise RecoveryFailed("degenerate zero bottleneck")
        for a in arcs:
            resid[a] -= bottleneck
        absorb[node] -= bottleneck
        length = float(sum(inst.routing_cost[a, t] for a in arcs))
        paths.append(Path(arcs, length, node, bottleneck))

    factors: list[tuple[str, int]] = []
    for a in range(inst.n_arcs):
        xa = state.X[a, t]
        if Z[a] > FRAC_TOL and Z[a] >= xa - FRAC_TOL and xa < 1.0 - FRAC_TOL:
            factors.append(("arc", a))
    dests = {p.dest for p in paths}
    for i in sorted(dests):
        wi = state.W[i, t]
        absorbed = sum(p.flow for p in paths if p.dest == i)
        if absorbed >= wi - FRAC_TOL and wi < 1.0 - FRAC_TOL:
            factors.append(("fac", i))
    return PathDecomposition(k, t, paths, factors)


def _solve_factor_duals(decomp: PathDecomposition) -> tuple[float, dict]:
    """gamma_k and the restricting-factor duals from the zero-reduced-cost
    path equations: a square solve when |C| = n_paths - 1, else the
    gamma_k-minimising LP."""
    paths, factors = decomp.paths, decomp.factors
    n = len(paths)
    if n == 1 and not factors:
        return paths[0].length, {}
    fidx = {f: pos for pos, f in enumerate(factors)}

    def row_for(p: Path) -> np.ndarray:
        row = np.zeros(1 + len(factors))
        row[0] = 1.0
        if ("fac", p.dest) in fidx:
            row[1 + fidx[("fac", p.dest)]] -= 1.0
        for a in p.arcs:
            if ("arc", a) in fidx:
                row[1 + fidx[("arc", a)]] -= 1.0
        return row

    if len(factors) == n - 1:
        A = np.array([row_for(p) for p in paths])
        b = np.array([p.length for p in paths])
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            sol = None
        if sol is not None and np.all(sol >= -1e-9):
            values = {f: max(0.0, float(sol[1 + pos])) for f, pos in fidx.items()}
            return float(sol[0]), values
    # degenerate factor structure: minimise gamma_k subject to the path rows
    lp = LpProblem()
    lp.add_var(obj=1.0, lo=0.0)
    for _ in factors:
        lp.add_var(obj=0.0, lo=0.0)
    for p in paths:
        row = row_for(p)
        lp.add_row([(j, float(c)) for j, c in enumerate(row) if c != 0.0], EQ, p.length)
    res = lp_solve(lp)
    if res.status != "optimal":
        raise RecoveryFailed(f"factor LP is {res.status}")
    values = {f: max(0.0, float(res.x[1 + pos])) for f, pos in fidx.items()}
    return float(res.x[0]), values


def recover_duals(decomp: PathDecomposition, inst: Instance, state: NetworkState,
                  k: int, t: int, objective: float,
                  style: str = "lambda") -> OptimalityCut:
    """Complete the factor duals into a full dual-optimal vector.

    ``style`` chooses how non-factor gammas are propagated: "lambda"
    follows the source's shortest-path tree over the partially open graph
    (the lambda-heavy analogue), "gamma" uses all-arcs-open distances
    clipped by the distance to a free absorber (the gamma-heavy analogue).
    Both coincide with the integral analytic cuts on integral states.
    """
    if state.W[k, t] > FRAC_TOL:
        raise RecoveryFailed("analytic recovery assumes a closed source facility")
    gamma_k, factor_duals = _solve_factor_duals(decomp)
    lam = np.zeros(inst.n_arcs)
    for (kind, a), val in factor_duals.items():
        if kind == "arc":
            lam[a] = val
    fac_gamma = {i: v for (kind, i), v in factor_duals.items() if kind == "fac"}

    usable = state.X[:, t] > TOL
    lengths = inst.routing_cost[:, t] + lam
    # anchors: every partially/fully open facility must price at zero unless
    # it is a restricting factor (whose dual was just solved) or the source
    anchored_zero = [i for i in range(inst.n_nodes)
                     if state.W[i, t] > TOL and i != k and i not in fac_gamma]
    sources = [(k, -gamma_k)] + [(i, -g) for i, g in fac_gamma.items() if g > 0.0]
    down = dijkstra(inst, lengths, usable, sources)
    with np.errstate(invalid="ignore"):
        gamma = np.maximum(0.0, -down)
    gamma[np.isnan(gamma)] = 0.0
    if style == "gamma":
        all_arcs = np.ones(inst.n_arcs, dtype=bool)
        down_all = dijkstra(inst, lengths, all_arcs, sources)
        up_sources = [(i, 0.0) for i in anchored_zero]
        up_sources += [(i, g) for i, g in fac_gamma.items()]
        up = dijkstra(inst, lengths, usable, up_sources, reverse=True)
        with np.errstate(invalid="ignore"):
            gamma = np.maximum(0.0, np.minimum(-down_all, up))
        gamma[np.isnan(gamma)] = 0.0
    for i in anchored_zero:
        gamma[i] = 0.0
    for i, g in fac_gamma.items():
        gamma[i] = g
    gamma[k] = gamma_k
    for a, (i, j) in enumerate(inst.arcs):
        if state.X[a, t] <= TOL:
            lam[a] = max(lam[a], gamma[i] - gamma[j] - inst.routing_cost[a, t])
    cut = OptimalityCut(k, t, gamma, lam)
    if check_cut(inst, cut, state, objective):
        raise RecoveryFailed("recovered duals failed validation")
    return cut


# ---------------------------------------------------------------------------
# the warm-start loop
# ---------------------------------------------------------------------------

def _fractional_cuts(inst, state, k, t, flow: FlowResult, kind: str,
                     trace: WarmStartTrace) -> list[OptimalityCut]:
    nona = cut_from_result(inst, k, t, flow.result)
    if kind == "nona":
        return [nona]
    styles = ["lambda"] if kind == "anone" else ["lambda", "gamma"]
    cuts: list[OptimalityCut] = []
    for style in styles:
        try:
            decomp = decompose_flow(flow.Z, inst, state, k, t)
            cuts.append(recover_duals(decomp, inst, state, k, t, flow.objective, style))
        except RecoveryFailed:
            trace.recover_fallbacks += 1
            if not any(c.key() == nona.key() for c in cuts):
                cuts.append(nona)
    return cuts


def warm_start(inst: Instance, model, cfg, limits=None,
               max_iterations: int = 200, stall_improvement: float = 1e-5,
               stall_runs: int = 3) -> WarmStartTrace:
    """Iterate master-LP / sub-problem sweeps until no cut is violated, the
    bound stalls, or the iteration cap is reached.  Cuts are attached to
    ``model`` in place; the trace records per-iteration bounds and counts."""
    trace = WarmStartTrace()
    deadline = None
    if limits is not None and math.isfinite(limits.time):
        deadline = time.monotonic() + max(0.0, limits.time)
    basis = None
    cache: dict = {}
    prev_bound = None
    stall = 0
    for _ in range(max_iterations):
        res = lp_solve(model.lp, basis=basis)
        if res.status == "infeasible":
            trace.termination = "master_infeasible"
            break
        basis = res.basis
        bound = res.objective
        state = model.extract_state(res.x)
        n_opt = n_feas = n_cover = 0
        if cfg.cover_cuts:
            for t in inst.periods():
                for cover in budget_cover_cuts(inst, state, t):
                    if model.attach_cut(cover) is not None:
                        n_cover += 1
        ts = time.monotonic()
        infeasible_kt: set[tuple[int, int]] = set()
        flows: dict[tuple[int, int], FlowResult] = {}
        for t in inst.periods():
            for k in range(inst.n_nodes):
                value, _ = service_flow(inst, state, k, t)
                if value < 1.0 - 1e-7:
                    fcut = feasibility_cut_min_cut(inst, state, k, t)
                    infeasible_kt.add((k, t))
                    if fcut is not None and model.attach_cut(fcut) is not None:
                        n_feas += 1
        for block in model.blocks():
            members = model.block_members(block)
            if any(m in infeasible_kt for m in members):
                continue
            if model.cfg.disaggregation == "nodetime":
                weights = [1.0]
            else:
                weights = [float(inst.demand[k2, t2]) for (k2, t2) in members]
            target = 0.0
            parts_needed = []
            for (k2, t2), w in zip(members, weights):
                if w == 0.0 and model.cfg.disaggregation != "nodetime":
                    continue
                if state.W[k2, t2] >= 1.0 - FRAC_TOL:
                    continue
                flow = flows.get((k2, t2))
                if flow is None:
                    flow = fractional_subproblem(inst, state, k2, t2, cache)
                    flows[(k2, t2)] = flow
                target += w * flow.objective
                parts_needed.append(((k2, t2), w, flow))
            if model.theta_value(res.x, block) >= target - CUT_VIOLATION_WS:
                continue
            by_style: dict[int, list] = {}
            for (k2, t2), w, flow in parts_needed:
                if flow.objective <= 0.0:
                    continue
                kind = cfg.warmstart_cut_kind
                if state.W[k2, t2] > FRAC_TOL and kind != "nona":
                    kind = "nona"  # fractional source facility: no analytic form
                for pos, cut in enumerate(_fractional_cuts(inst, state, k2, t2, flow,
                                                           kind, trace)):
                    by_style.setdefault(pos, []).append((cut, w))
            for pos in sorted(by_style):
                parts = by_style[pos]
                if model.cfg.disaggregation == "nodetime":
                    if model.attach_cut(parts[0][0]) is not None:
                        n_opt += 1
                else:
                    bc = model.assemble_block_cut(block, parts)
                    if bc is not None and model.attach_cut(bc) is not None:
                        n_opt += 1
        trace.subproblem_time += time.monotonic() - ts
        trace.subproblems_solved += len(model.blocks())
        trace.bounds.append(bound)
        trace.cuts_opt.append(n_opt)
        trace.cuts_feas.append(n_feas)
        trace.cuts_cover.append(n_cover)
        if n_opt + n_feas + n_cover == 0:
            trace.termination = "no_cuts"
            break
        if prev_bound is not None:
            if (bound - prev_bound) / max(1.0, abs(bound)) < stall_improvement:
                stall += 1
                if stall >= stall_runs:
                    trace.termination = "stalled"
                    break
            else:
                stall = 0
        prev_bound = bound
        if deadline is not None and time.monotonic() > deadline:
            trace.termination = "time_limit"
            break
    if not trace.termination:
        trace.termination = "max_iterations"
    return trace
