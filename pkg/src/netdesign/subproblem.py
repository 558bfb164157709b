"""Per-(client, period) sub-problems and Benders optimality cuts.

Each sub-problem asks for the cheapest way to serve one client's demand:
zero if the client hosts an open facility, otherwise the cheapest route to
an open facility over the currently open arcs.  For integral states that
is a shortest-path computation, and optimal dual vectors (gamma over
nodes, lambda over arcs) can be written down directly.  Two distinct
constructions exist: the lambda-heavy cut puts the savings on closed
arcs, the gamma-heavy cut puts them on facilities under the
all-arcs-open distance, clipped by the current distance-to-facility.
Both price every cut row as

    theta_kt >= gamma_k - sum_i gamma_i W_it - sum_a lambda_a X_at

and are exactly tight at the generating state.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .instance import Instance, NetworkState
from .lp import GE, LE, LpProblem, LpResult, lp_solve

INF = math.inf


class SubproblemInfeasible(Exception):
    """No open facility is reachable; the caller should emit a feasibility cut."""


@dataclass
class DistanceField:
    """Shortest distances for sub-problem (k, t) over the open arcs:
    ``D[i]`` from the source k to i, ``Dbar[i]`` from i to its nearest
    open facility (both inf when unreachable)."""

    k: int
    t: int
    D: np.ndarray
    Dbar: np.ndarray


@dataclass
class OptimalityCut:
    """Dual vector for one (k, t) sub-problem; the cut constant is gamma[k]."""

    k: int
    t: int
    gamma: np.ndarray       # (N,)
    lam: np.ndarray         # (n_arcs,)

    @property
    def constant(self) -> float:
        return float(self.gamma[self.k])

    def value_at(self, W_t: np.ndarray, X_t: np.ndarray) -> float:
        return float(self.gamma[self.k] - self.gamma @ W_t - self.lam @ X_t)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.gamma) <= tol) and np.all(np.abs(self.lam) <= tol))

    @property
    def kind(self) -> str:
        return "opt"

    def key(self) -> tuple:
        return ("opt", self.k, self.t, self.gamma.tobytes(), self.lam.tobytes())


def dijkstra(inst: Instance, lengths: np.ndarray, arc_usable: np.ndarray,
             sources: list[tuple[int, float]], reverse: bool = False) -> np.ndarray:
    """Multi-source Dijkstra over usable arcs; lowest node index pops first
    on distance ties.  ``reverse`` relaxes arcs tail-ward (distance *to* the
    sources)."""
    dist = np.full(inst.n_nodes, INF)
    heap: list[tuple[float, int]] = []
    for node, d0 in sources:
        if d0 < dist[node]:
            dist[node] = d0
            heapq.heappush(heap, (d0, node))
    while heap:
        d, i = heapq.heappop(heap)
        if d > dist[i]:
            continue
        arcs = inst.in_arcs[i] if reverse else inst.out_arcs[i]
        for a in arcs:
            if not arc_usable[a]:
                continue
            j = inst.arcs[a][0] if reverse else inst.arcs[a][1]
            nd = d + lengths[a]
            if nd < dist[j]:
                dist[j] = nd
                heapq.heappush(heap, (nd, j))
    return dist


def shortest_path_tree(inst: Instance, lengths: np.ndarray, arc_usable: np.ndarray,
                       k: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-source Dijkstra that also returns the incoming tree arc per node."""
    dist = np.full(inst.n_nodes, INF)
    parent = np.full(inst.n_nodes, -1, dtype=int)
    dist[k] = 0.0
    heap: list[tuple[float, int]] = [(0.0, k)]
    while heap:
        d, i = heapq.heappop(heap)
        if d > dist[i]:
            continue
        for a in inst.out_arcs[i]:
            if not arc_usable[a]:
                continue
            j = inst.arcs[a][1]
            nd = d + lengths[a]
            if nd < dist[j]:
                dist[j] = nd
                parent[j] = a
                heapq.heappush(heap, (nd, j))
    return dist, parent


def shortest_distances(inst: Instance, state: NetworkState, k: int, t: int) -> DistanceField:
    """Exact distances over arcs open in ``state`` at period t (integral)."""
    open_arcs = state.X[:, t] >= 0.5
    lengths = inst.routing_cost[:, t]
    D = dijkstra(inst, lengths, open_arcs, [(k, 0.0)])
    facilities = [(i, 0.0) for i in range(inst.n_nodes) if state.W[i, t] >= 0.5]
    Dbar = dijkstra(inst, lengths, open_arcs, facilities, reverse=True)
    return DistanceField(k, t, D, Dbar)


def solve_subproblem(inst: Instance, state: NetworkState, k: int, t: int,
                     dist: DistanceField | None = None) -> float:
    """Unit-demand routing cost theta* for (k, t); inf when infeasible."""
    if state.W[k, t] >= 0.5:
        return 0.0
    if dist is None:
        dist = shortest_distances(inst, state, k, t)
    best = INF
    for i in range(inst.n_nodes):
        if state.W[i, t] >= 0.5 and dist.D[i] < best:
            best = dist.D[i]
    return best


def cut_lambda_heavy(inst: Instance, state: NetworkState, k: int, t: int,
                     dist: DistanceField) -> OptimalityCut:
    """First analytic cut: gamma from the source's shortest-path tree,
    savings loaded onto closed arcs."""
    if state.W[k, t] >= 0.5:
        raise ValueError("no cut when the source already hosts a facility")
    gamma_k = solve_subproblem(inst, state, k, t, dist)
    if math.isinf(gamma_k):
        raise SubproblemInfeasible(f"sub-problem ({k},{t})")
    with np.errstate(invalid="ignore"):
        gamma = np.maximum(0.0, gamma_k - dist.D)
    gamma[np.isnan(gamma)] = 0.0
    gamma[k] = gamma_k
    lam = _closed_arc_lambdas(inst, state, t, gamma)
    return OptimalityCut(k, t, gamma, lam)


def cut_gamma_heavy(inst: Instance, state: NetworkState, k: int, t: int,
                    dist: DistanceField) -> OptimalityCut:
    """Second analytic cut: savings on facilities under all-arcs-open
    distances, clipped by the current distance to an open facility."""
    if state.W[k, t] >= 0.5:
        raise ValueError("no cut when the source already hosts a facility")
    gamma_k = float(dist.Dbar[k])
    if math.isinf(gamma_k):
        raise SubproblemInfeasible(f"sub-problem ({k},{t})")
    all_open = np.ones(inst.n_arcs, dtype=bool)
    D_all = dijkstra(inst, inst.routing_cost[:, t], all_open, [(k, 0.0)])
    with np.errstate(invalid="ignore"):
        gamma = np.maximum(0.0, np.minimum(gamma_k - D_all, dist.Dbar))
    gamma[np.isnan(gamma)] = 0.0
    gamma[k] = gamma_k
    lam = _closed_arc_lambdas(inst, state, t, gamma)
    return OptimalityCut(k, t, gamma, lam)


def _closed_arc_lambdas(inst: Instance, state: NetworkState, t: int,
                        gamma: np.ndarray) -> np.ndarray:
    lam = np.zeros(inst.n_arcs)
    for a, (i, j) in enumerate(inst.arcs):
        if state.X[a, t] < 0.5:
            lam[a] = max(0.0, gamma[i] - gamma[j] - inst.routing_cost[a, t])
    return lam


# ---------------------------------------------------------------------------
# LP route (also used with fractional states)
# ---------------------------------------------------------------------------

def build_subproblem_lp(inst: Instance, W_t: np.ndarray, X_t: np.ndarray,
                        k: int, t: int) -> LpProblem:
    """The (k, t) routing LP with right-hand sides from (W_t, X_t).

    Row order is fixed so dual extraction can index by position: the source
    coverage row, one capacity row per node i != k, then one capacity row
    per arc.  Flow back into the source is fixed to zero via bounds.
    """
    p = LpProblem()
    for a in range(inst.n_arcs):
        hi = 0.0 if inst.arcs[a][1] == k else math.inf
        p.add_var(obj=float(inst.routing_cost[a, t]), lo=0.0, hi=hi)
    p.add_row([(a, -1.0) for a in inst.out_arcs[k]], LE, float(W_t[k]) - 1.0)
    for i in range(inst.n_nodes):
        if i == k:
            continue
        coeffs = [(a, 1.0) for a in inst.in_arcs[i]]
        coeffs += [(a, -1.0) for a in inst.out_arcs[i]]
        p.add_row(coeffs, LE, float(W_t[i]))
    for a in range(inst.n_arcs):
        p.add_row([(a, 1.0)], LE, float(X_t[a]))
    return p


def cut_from_result(inst: Instance, k: int, t: int, res: LpResult) -> OptimalityCut:
    """Map routing-LP row duals onto (gamma, lambda)."""
    y = res.duals
    gamma = np.zeros(inst.n_nodes)
    gamma[k] = max(0.0, -y[0])
    pos = 1
    for i in range(inst.n_nodes):
        if i == k:
            continue
        gamma[i] = max(0.0, -y[pos])
        pos += 1
    lam = np.maximum(0.0, -y[pos : pos + inst.n_arcs])
    return OptimalityCut(k, t, gamma, lam)


def cut_from_lp(inst: Instance, state: NetworkState, k: int, t: int) -> OptimalityCut:
    """Optimality cut from LP duals; works for fractional states too."""
    p = build_subproblem_lp(inst, state.W[:, t], state.X[:, t], k, t)
    res = lp_solve(p)
    if res.status == "infeasible":
        raise SubproblemInfeasible(f"sub-problem ({k},{t})")
    if res.status != "optimal":
        raise RuntimeError(f"unexpected sub-problem status {res.status}")
    return cut_from_result(inst, k, t, res)


def check_cut(inst: Instance, cut: OptimalityCut, state: NetworkState,
              theta_star: float, tol: float = 1e-6) -> list[str]:
    """Validate dual feasibility and exact tightness at the generating state.

    Returns an empty report when the cut's duals are nonnegative, every arc
    with head != k has nonnegative reduced cost, and the cut value equals
    theta_star at ``state``.
    """
    report: list[str] = []
    if np.any(cut.gamma < -tol):
        report.append(f"negative gamma at nodes {np.nonzero(cut.gamma < -tol)[0].tolist()}")
    if np.any(cut.lam < -tol):
        report.append(f"negative lambda at arcs {np.nonzero(cut.lam < -tol)[0].tolist()}")
    rho = inst.routing_cost[:, cut.t]
    for a, (i, j) in enumerate(inst.arcs):
        if j == cut.k:
            continue
        slack = rho[a] + cut.lam[a] + cut.gamma[j] - cut.gamma[i]
        if slack < -tol * (1.0 + abs(rho[a])):
            report.append(f"reduced cost of arc {(i, j)} is {slack:.3g}")
    value = cut.value_at(state.W[:, cut.t], state.X[:, cut.t])
    if abs(value - theta_star) > tol * (1.0 + abs(theta_star)):
        report.append(f"cut value {value!r} != theta* {theta_star!r} at generating state")
    return report
