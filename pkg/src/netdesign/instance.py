"""Problem data model for dynamic facility location / network design.

An instance lives on an undirected potential graph.  Each undirected link
{i, j} (stored with i < j) materialises two directed arcs: arc 2*l is
(i, j) and arc 2*l + 1 is (j, i), so ``a ^ 1`` is the reverse arc and
``a // 2`` recovers the link.  Decision periods are 1-based; period 0 is
the fixed pre-existing network.  All per-period arrays have shape
(..., T + 1) with column 0 either the initial state or unused.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np


class InstanceError(ValueError):
    """Base class for instance parsing / validation problems."""


class FormatError(InstanceError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(InstanceError):
    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(f"invariant '{invariant}' violated" + (f": {detail}" if detail else ""))


class GenerationError(InstanceError):
    pass


@dataclass(eq=False)
class Instance:
    """Immutable problem data.  Mutating fields after construction is unsupported."""

    n_nodes: int
    n_periods: int
    links: list[tuple[int, int]]          # undirected, i < j, sorted, unique
    demand: np.ndarray                    # (N, T+1), column 0 unused
    open_cost: np.ndarray                 # g, (N, T+1)
    link_cost: np.ndarray                 # c, (L, T+1) per undirected link
    routing_cost: np.ndarray              # rho, (2L, T+1) per directed arc
    facility_op_cost: np.ndarray          # f, (N, T+1)
    link_op_cost: np.ndarray              # h, (L, T+1)
    budget_fac: np.ndarray                # (T+1,), column 0 unused
    budget_link: np.ndarray               # (T+1,)
    w0: np.ndarray                        # (N,) 0/1 facilities open at period 0
    x0: np.ndarray                        # (L,) 0/1 links open at period 0

    # derived, filled in __post_init__
    arcs: list[tuple[int, int]] = field(default_factory=list, repr=False)
    out_arcs: list[list[int]] = field(default_factory=list, repr=False)
    in_arcs: list[list[int]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._canonicalize()
        self.arcs = []
        for (i, j) in self.links:
            self.arcs.append((i, j))
            self.arcs.append((j, i))
        self.out_arcs = [[] for _ in range(self.n_nodes)]
        self.in_arcs = [[] for _ in range(self.n_nodes)]
        for a, (i, j) in enumerate(self.arcs):
            self.out_arcs[i].append(a)
            self.in_arcs[j].append(a)
        self.validate()

    def _canonicalize(self):
        """Normalise link orientation to i < j and sort links, permuting link data."""
        fixed = []
        rho = np.asarray(self.routing_cost, dtype=float)
        for l, (i, j) in enumerate(self.links):
            if i > j:
                fixed.append((j, i))
                rho[[2 * l, 2 * l + 1]] = rho[[2 * l + 1, 2 * l]]
            else:
                fixed.append((i, j))
        order = sorted(range(len(fixed)), key=lambda l: fixed[l])
        arc_order = [x for l in order for x in (2 * l, 2 * l + 1)]
        self.links = [fixed[l] for l in order]
        self.link_cost = np.asarray(self.link_cost, dtype=float)[order]
        self.link_op_cost = np.asarray(self.link_op_cost, dtype=float)[order]
        self.routing_cost = rho[arc_order]
        self.x0 = np.asarray(self.x0, dtype=float)[order]
        self.demand = np.asarray(self.demand, dtype=float)
        self.open_cost = np.asarray(self.open_cost, dtype=float)
        self.facility_op_cost = np.asarray(self.facility_op_cost, dtype=float)
        self.budget_fac = np.asarray(self.budget_fac, dtype=float)
        self.budget_link = np.asarray(self.budget_link, dtype=float)
        self.w0 = np.asarray(self.w0, dtype=float)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_arcs(self) -> int:
        return 2 * len(self.links)

    def periods(self) -> range:
        return range(1, self.n_periods + 1)

    def cum_budget_fac(self, t: int) -> float:
        return float(self.budget_fac[1 : t + 1].sum())

    def cum_budget_link(self, t: int) -> float:
        return float(self.budget_link[1 : t + 1].sum())

    def validate(self):
        N, T, L = self.n_nodes, self.n_periods, self.n_links
        if N < 1 or T < 1:
            raise ValidationError("positive sizes", f"n_nodes={N} n_periods={T}")
        seen = set()
        for (i, j) in self.links:
            if i == j:
                raise ValidationError("no self-loop links", f"link ({i},{j})")
            if not (0 <= i < N and 0 <= j < N):
                raise ValidationError("link endpoints in range", f"link ({i},{j})")
            if i > j:
                raise ValidationError("link stored with i<j", f"link ({i},{j})")
            if (i, j) in seen:
                raise ValidationError("each link appears once", f"link ({i},{j})")
            seen.add((i, j))
        shapes = {
            "demand": (self.demand, (N, T + 1)),
            "open_cost": (self.open_cost, (N, T + 1)),
            "link_cost": (self.link_cost, (L, T + 1)),
            "routing_cost": (self.routing_cost, (2 * L, T + 1)),
            "facility_op_cost": (self.facility_op_cost, (N, T + 1)),
            "link_op_cost": (self.link_op_cost, (L, T + 1)),
            "budget_fac": (self.budget_fac, (T + 1,)),
            "budget_link": (self.budget_link, (T + 1,)),
            "w0": (self.w0, (N,)),
            "x0": (self.x0, (L,)),
        }
        for name, (arr, shape) in shapes.items():
            if arr.shape != shape:
                raise ValidationError("array shapes", f"{name} has {arr.shape}, want {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError("finite entries", name)
            if name not in ("w0", "x0") and np.any(arr[..., 1:] < 0):
                raise ValidationError("nonnegative data", name)
        if not set(np.unique(self.w0)) <= {0.0, 1.0}:
            raise ValidationError("binary initial facilities")
        if not set(np.unique(self.x0)) <= {0.0, 1.0}:
            raise ValidationError("binary initial links")

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.n_periods == other.n_periods
            and self.links == other.links
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in (
                    "demand", "open_cost", "link_cost", "routing_cost",
                    "facility_op_cost", "link_op_cost", "budget_fac",
                    "budget_link", "w0", "x0",
                )
            )
        )


@dataclass
class NetworkState:
    """Facility / arc openness per period, possibly fractional.

    ``W`` is (N, T+1), ``X`` is (n_arcs, T+1); column 0 mirrors the instance's
    initial network.  ``U`` (N, T+1) and ``V`` (n_links, T+1) are construction
    indicators.  Openness is monotone in t except that period-1 arc
    directions may differ under the first-period reformulation.
    """

    W: np.ndarray
    X: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def is_integral(self, tol: float = 1e-6) -> bool:
        for arr in (self.W, self.X, self.U, self.V):
            if np.any(np.abs(arr - np.round(arr)) > tol):
                return False
        return True

    def rounded(self) -> "NetworkState":
        return NetworkState(*(np.round(a) for a in (self.W, self.X, self.U, self.V)))

    def copy(self) -> "NetworkState":
        return NetworkState(*(a.copy() for a in (self.W, self.X, self.U, self.V)))


@dataclass
class FullSolution:
    """A complete solution of the monolithic model: state, flows and cost."""

    state: NetworkState
    Z: np.ndarray            # (n_arcs, N, T+1) fraction of client k's demand on arc a
    theta: np.ndarray        # (N, T+1) unit-demand routing cost per client
    objective: float


@dataclass
class Violation:
    constraint: str
    index: tuple
    amount: float


def empty_state(inst: Instance) -> NetworkState:
    """All-closed state over the horizon, with period 0 from the instance."""
    T = inst.n_periods
    W = np.zeros((inst.n_nodes, T + 1))
    X = np.zeros((inst.n_arcs, T + 1))
    U = np.zeros((inst.n_nodes, T + 1))
    V = np.zeros((inst.n_links, T + 1))
    W[:, 0] = inst.w0
    for l in range(inst.n_links):
        X[2 * l, 0] = X[2 * l + 1, 0] = inst.x0[l]
    return NetworkState(W, X, U, V)


def state_from_plan(inst: Instance, facilities: dict[int, list[int]],
                    links: dict[int, list[int]]) -> NetworkState:
    """Build an integral state from {period: [items constructed that period]}."""
    s = empty_state(inst)
    for t in inst.periods():
        s.W[:, t] = s.W[:, t - 1]
        s.X[:, t] = s.X[:, t - 1]
        for i in facilities.get(t, []):
            if s.W[i, t] == 0.0:
                s.W[i, t] = 1.0
                s.U[i, t] = 1.0
        for l in links.get(t, []):
            if s.X[2 * l, t] == 0.0:
                s.X[2 * l, t] = s.X[2 * l + 1, t] = 1.0
                s.V[l, t] = 1.0
    return s


def evaluate_objective(inst: Instance, sol: FullSolution) -> float:
    """Total cost: facility operation + demand routing + link operation.

    The link operating term charges each undirected link once, through its
    i < j direction.
    """
    N, T = inst.n_nodes, inst.n_periods
    if sol.Z.shape != (inst.n_arcs, N, T + 1) or sol.state.W.shape != (N, T + 1):
        raise ValueError("solution dimensions do not match instance")
    total = 0.0
    for t in inst.periods():
        total += float(inst.facility_op_cost[:, t] @ sol.state.W[:, t])
        total += float(inst.link_op_cost[:, t] @ sol.state.X[0::2, t])
        rho_t = inst.routing_cost[:, t]
        for k in range(N):
            d = inst.demand[k, t]
            if d > 0:
                total += float(d * (rho_t @ sol.Z[:, k, t]))
    return total


def check_feasibility(inst: Instance, sol: FullSolution, *, reformulation: bool = False,
                      tol: float = 1e-6) -> list[Violation]:
    """Check a full solution against the monolithic constraints.

    Returns one :class:`Violation` per violated constraint instance; an empty
    list means feasible.  Constraint tags follow the model numbering:
    (2) demand coverage, (3) flow conservation, (4) no return to origin,
    (5) flow only on open arcs, (6)/(7) opening dynamics, (8)/(9) budgets,
    (10) arc bi-directionality (period 1 exempt when ``reformulation``).
    """
    N, T = inst.n_nodes, inst.n_periods
    W, X, U, V = sol.state.W, sol.state.X, sol.state.U, sol.state.V
    Z = sol.Z
    out: list[Violation] = []
    for t in inst.periods():
        for k in range(N):
            served = W[k, t] + sum(Z[a, k, t] for a in inst.out_arcs[k])
            if served < 1 - tol:
                out.append(Violation("2", (k, t), 1 - served))
            for i in range(N):
                if i == k:
                    continue
                inflow = sum(Z[a, k, t] for a in inst.in_arcs[i])
                outflow = sum(Z[a, k, t] for a in inst.out_arcs[i])
                slack = outflow + W[i, t] - inflow
                if slack < -tol:
                    out.append(Violation("3", (i, k, t), -slack))
            for a in inst.in_arcs[k]:
                if Z[a, k, t] > tol:
                    out.append(Violation("4", (a, k, t), Z[a, k, t]))
            for a in range(inst.n_arcs):
                if Z[a, k, t] > X[a, t] + tol:
                    out.append(Violation("5", (a, k, t), Z[a, k, t] - X[a, t]))
        for i in range(N):
            resid = W[i, t - 1] + U[i, t] - W[i, t]
            if abs(resid) > tol:
                out.append(Violation("6", (i, t), abs(resid)))
        for l in range(inst.n_links):
            a, b = 2 * l, 2 * l + 1
            if reformulation and t == 1:
                # one direction may open in period 1; V pays for the pair
                resid = X[a, 0] + V[l, 1] - X[a, 1] - X[b, 1]
                if abs(resid) > tol:
                    out.append(Violation("7", (l, t), abs(resid)))
                if X[a, 1] + X[b, 1] > 1 + tol:
                    out.append(Violation("7", (l, t), X[a, 1] + X[b, 1] - 1))
            elif reformulation and t == 2:
                resid = X[a, 1] + X[b, 1] + V[l, 2] - X[a, 2]
                if abs(resid) > tol:
                    out.append(Violation("7", (l, t), abs(resid)))
            else:
                resid = X[a, t - 1] + V[l, t] - X[a, t]
                if abs(resid) > tol:
                    out.append(Violation("7", (l, t), abs(resid)))
            if X[a, t] - X[b, t]:
                if abs(X[a, t] - X[b, t]) > tol and not (reformulation and t == 1):
                    out.append(Violation("10", (l, t), abs(X[a, t] - X[b, t])))
        spent_fac = sum(float(inst.open_cost[:, v] @ U[:, v]) for v in range(1, t + 1))
        if spent_fac > inst.cum_budget_fac(t) + tol:
            out.append(Violation("8", (t,), spent_fac - inst.cum_budget_fac(t)))
        spent_link = sum(float(inst.link_cost[:, v] @ V[:, v]) for v in range(1, t + 1))
        if spent_link > inst.cum_budget_link(t) + tol:
            out.append(Violation("9", (t,), spent_link - inst.cum_budget_link(t)))
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def save_instance(inst: Instance, path) -> None:
    """Write the canonical text form: fixed section order, sorted rows,
    shortest round-trip decimals.  Equal instances produce identical bytes."""
    N, T, L = inst.n_nodes, inst.n_periods, inst.n_links
    lines = ["# netdesign instance", f"n_nodes {N}", f"n_periods {T}", "LINKS"]
    for (i, j) in inst.links:
        lines.append(f"{i} {j}")
    lines.append("DEMAND")
    for k in range(N):
        for t in inst.periods():
            lines.append(f"{k} {t} {_fmt(inst.demand[k, t])}")
    lines.append("COSTS")
    for i in range(N):
        for t in inst.periods():
            lines.append(f"G {i} {t} {_fmt(inst.open_cost[i, t])}")
    for l in range(L):
        for t in inst.periods():
            lines.append(f"C {l} {t} {_fmt(inst.link_cost[l, t])}")
    for a, (i, j) in enumerate(inst.arcs):
        for t in inst.periods():
            lines.append(f"RHO {i} {j} {t} {_fmt(inst.routing_cost[a, t])}")
    for i in range(N):
        for t in inst.periods():
            lines.append(f"F {i} {t} {_fmt(inst.facility_op_cost[i, t])}")
    for l in range(L):
        for t in inst.periods():
            lines.append(f"H {l} {t} {_fmt(inst.link_op_cost[l, t])}")
    lines.append("BUDGETS")
    for t in inst.periods():
        lines.append(f"{t} {_fmt(inst.budget_fac[t])} {_fmt(inst.budget_link[t])}")
    lines.append("INITIAL")
    for i in range(N):
        if inst.w0[i] > 0:
            lines.append(f"W {i}")
    for l, (i, j) in enumerate(inst.links):
        if inst.x0[l] > 0:
            lines.append(f"X {i} {j}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> Instance:
    """Parse and validate an instance file.  Raises :class:`FormatError` with
    a line number on malformed input, :class:`ValidationError` on bad data."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readlines()
    header: dict[str, int] = {}
    section = None
    links: list[tuple[int, int]] = []
    demand_rows: list[tuple[int, int, float]] = []
    cost_rows: list[tuple[str, tuple, float, int]] = []
    budget_rows: list[tuple[int, float, float]] = []
    init_w: list[int] = []
    init_x: list[tuple[int, int]] = []

    def _ints(parts, n, ln):
        try:
            return [int(p) for p in parts[:n]]
        except ValueError as e:
            raise FormatError(f"expected integer fields: {e}", ln)

    for ln, line in enumerate(raw, start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        parts = s.split()
        if parts[0] in ("LINKS", "DEMAND", "COSTS", "BUDGETS", "INITIAL"):
            section = parts[0]
            continue
        if section is None:
            if len(parts) != 2 or parts[0] not in ("n_nodes", "n_periods"):
                raise FormatError(f"unexpected header line {s!r}", ln)
            header[parts[0]] = _ints(parts[1:], 1, ln)[0]
        elif section == "LINKS":
            if len(parts) != 2:
                raise FormatError("LINKS row needs 'i j'", ln)
            i, j = _ints(parts, 2, ln)
            links.append((i, j))
        elif section == "DEMAND":
            if len(parts) != 3:
                raise FormatError("DEMAND row needs 'k t d'", ln)
            k, t = _ints(parts, 2, ln)
            try:
                demand_rows.append((k, t, float(parts[2])))
            except ValueError:
                raise FormatError(f"bad demand value {parts[2]!r}", ln)
        elif section == "COSTS":
            tag = parts[0]
            try:
                if tag in ("G", "F", "C", "H"):
                    i, t = _ints(parts[1:], 2, ln)
                    cost_rows.append((tag, (i, t), float(parts[3]), ln))
                elif tag == "RHO":
                    i, j, t = _ints(parts[1:], 3, ln)
                    cost_rows.append((tag, (i, j, t), float(parts[4]), ln))
                else:
                    raise FormatError(f"unknown cost tag {tag!r}", ln)
            except (IndexError, ValueError) as e:
                if isinstance(e, FormatError):
                    raise
                raise FormatError(f"bad cost row {s!r}", ln)
        elif section == "BUDGETS":
            if len(parts) != 3:
                raise FormatError("BUDGETS row needs 't bbar bhat'", ln)
            t = _ints(parts, 1, ln)[0]
            try:
                budget_rows.append((t, float(parts[1]), float(parts[2])))
            except ValueError:
                raise FormatError(f"bad budget value in {s!r}", ln)
        elif section == "INITIAL":
            if parts[0] == "W" and len(parts) == 2:
                init_w.append(_ints(parts[1:], 1, ln)[0])
            elif parts[0] == "X" and len(parts) == 3:
                i, j = _ints(parts[1:], 2, ln)
                init_x.append((min(i, j), max(i, j)))
            else:
                raise FormatError(f"bad INITIAL row {s!r}", ln)

    for key in ("n_nodes", "n_periods"):
        if key not in header:
            raise FormatError(f"missing header {key!r}")
    N, T = header["n_nodes"], header["n_periods"]
    norm_links = sorted((min(i, j), max(i, j)) for (i, j) in links)
    if len(set(norm_links)) != len(norm_links):
        raise ValidationError("each link appears once")
    link_index = {lk: l for l, lk in enumerate(norm_links)}
    L = len(norm_links)
    inst_arrays = dict(
        demand=np.zeros((N, T + 1)),
        open_cost=np.zeros((N, T + 1)),
        link_cost=np.zeros((L, T + 1)),
        routing_cost=np.zeros((2 * L, T + 1)),
        facility_op_cost=np.zeros((N, T + 1)),
        link_op_cost=np.zeros((L, T + 1)),
        budget_fac=np.zeros(T + 1),
        budget_link=np.zeros(T + 1),
        w0=np.zeros(N),
        x0=np.zeros(L),
    )

    def _check_node(i, ln):
        if not 0 <= i < N:
            raise FormatError(f"node {i} out of range", ln)

    def _check_period(t, ln):
        if not 1 <= t <= T:
            raise FormatError(f"period {t} out of range", ln)

    for (k, t, d) in demand_rows:
        _check_node(k, None), _check_period(t, None)
        inst_arrays["demand"][k, t] = d
    for (tag, idx, v, ln) in cost_rows:
        t = idx[-1]
        _check_period(t, ln)
        if tag == "G":
            _check_node(idx[0], ln)
            inst_arrays["open_cost"][idx[0], t] = v
        elif tag == "F":
            _check_node(idx[0], ln)
            inst_arrays["facility_op_cost"][idx[0], t] = v
        elif tag in ("C", "H"):
            if not 0 <= idx[0] < L:
                raise FormatError(f"link index {idx[0]} out of range", ln)
            key = "link_cost" if tag == "C" else "link_op_cost"
            inst_arrays[key][idx[0], t] = v
        else:  # RHO
            i, j = idx[0], idx[1]
            lk = (min(i, j), max(i, j))
            if lk not in link_index:
                raise FormatError(f"RHO references unknown link ({i},{j})", ln)
            a = 2 * link_index[lk] + (0 if i < j else 1)
            inst_arrays["routing_cost"][a, t] = v
    for (t, bbar, bhat) in budget_rows:
        _check_period(t, None)
        inst_arrays["budget_fac"][t] = bbar
        inst_arrays["budget_link"][t] = bhat
    for i in init_w:
        _check_node(i, None)
        inst_arrays["w0"][i] = 1.0
    for lk in init_x:
        if lk not in link_index:
            raise ValidationError("initial link exists", f"link {lk}")
        inst_arrays["x0"][link_index[lk]] = 1.0

    return Instance(n_nodes=N, n_periods=T, links=norm_links, **inst_arrays)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass
class GenParams:
    n_nodes: int
    n_periods: int
    link_density: float = 0.5
    existing_network: bool = True
    demand_range: tuple[float, float] = (0.0, 10.0)
    open_cost_range: tuple[float, float] = (40.0, 120.0)
    link_cost_range: tuple[float, float] = (15.0, 50.0)
    routing_cost_range: tuple[float, float] = (1.0, 10.0)
    facility_op_range: tuple[float, float] = (8.0, 24.0)
    link_op_range: tuple[float, float] = (2.0, 8.0)
    facility_budget_frac: float = 0.35
    link_budget_frac: float = 0.35
    max_retries: int = 200


def _connected(n: int, links: list[tuple[int, int]]) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (i, j) in links:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(n)}) == 1


def _min_spanning_cost(n: int, links: list[tuple[int, int]], cost: np.ndarray) -> tuple[float, list[int]]:
    """Prim's algorithm over the potential graph; returns (cost, link ids)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for l, (i, j) in enumerate(links):
        adj[i].append((j, l))
        adj[j].append((i, l))
    seen = [False] * n
    seen[0] = True
    heap: list[tuple[float, int, int]] = []
    for (j, l) in adj[0]:
        heapq.heappush(heap, (float(cost[l]), l, j))
    total, chosen = 0.0, []
    while heap and not all(seen):
        c, l, j = heapq.heappop(heap)
        if seen[j]:
            continue
        seen[j] = True
        total += c
        chosen.append(l)
        for (j2, l2) in adj[j]:
            if not seen[j2]:
                heapq.heappush(heap, (float(cost[l2]), l2, j2))
    return total, chosen


def generate_instance(params: GenParams, seed: int) -> Instance:
    """Deterministic random instance.  With ``existing_network`` the period-0
    state opens a random spanning subnetwork plus at least one facility, so
    every first-period sub-problem is feasible; otherwise period 0 is empty
    and first-period budgets are floored to admit one facility and a
    spanning tree."""
    p = params
    if p.n_nodes < 2:
        raise GenerationError("need n_nodes >= 2")
    rng = np.random.default_rng(seed)
    N, T = p.n_nodes, p.n_periods
    all_pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    links: list[tuple[int, int]] | None = None
    for _ in range(p.max_retries):
        mask = rng.random(len(all_pairs)) < p.link_density
        cand = [pair for pair, m in zip(all_pairs, mask) if m]
        if _connected(N, cand):
            links = cand
            break
    if links is None:
        raise GenerationError(
            f"link_density={p.link_density} did not yield a connected graph "
            f"in {p.max_retries} tries")
    L = len(links)

    def per_period(base: np.ndarray) -> np.ndarray:
        # column 0 unused; mild per-period drift
        out = np.zeros((len(base), T + 1))
        for t in range(1, T + 1):
            out[:, t] = base * rng.uniform(0.9, 1.1, size=len(base))
        return out

    demand = np.zeros((N, T + 1))
    base_d = rng.uniform(*p.demand_range, size=N)
    base_d[rng.random(N) < 0.1] = 0.0
    for t in range(1, T + 1):
        demand[:, t] = np.round(base_d * rng.uniform(0.8, 1.2, size=N), 3)

    open_cost = per_period(rng.uniform(*p.open_cost_range, size=N))
    link_cost = per_period(rng.uniform(*p.link_cost_range, size=L))
    fac_op = per_period(rng.uniform(*p.facility_op_range, size=N))
    link_op = per_period(rng.uniform(*p.link_op_range, size=L))
    rho_base = rng.uniform(*p.routing_cost_range, size=L)
    routing = np.zeros((2 * L, T + 1))
    for t in range(1, T + 1):
        per_t = rho_base * rng.uniform(0.95, 1.05, size=L)
        routing[0::2, t] = per_t
        routing[1::2, t] = per_t

    w0 = np.zeros(N)
    x0 = np.zeros(L)
    if p.existing_network:
        _, tree = _min_spanning_cost(N, links, rng.random(L))
        x0[tree] = 1.0
        extra = rng.random(L) < 0.15
        x0[extra] = 1.0
        n_fac = max(1, N // 5)
        w0[rng.choice(N, size=n_fac, replace=False)] = 1.0

    budget_fac = np.zeros(T + 1)
    budget_link = np.zeros(T + 1)
    budget_fac[1:] = p.facility_budget_frac * open_cost[:, 1:].mean() * N / T
    budget_link[1:] = p.link_budget_frac * link_cost[:, 1:].mean() * L / T
    if not p.existing_network:
        # make a from-scratch build affordable in period 1
        mst_cost, _ = _min_spanning_cost(N, links, link_cost[:, 1])
        budget_fac[1] = max(budget_fac[1], 1.1 * float(open_cost[:, 1].min()))
        budget_link[1] = max(budget_link[1], 1.1 * mst_cost)
    budget_fac[1:] = np.round(budget_fac[1:], 3)
    budget_link[1:] = np.round(budget_link[1:], 3)

    return Instance(
        n_nodes=N, n_periods=T, links=links,
        demand=demand, open_cost=open_cost, link_cost=link_cost,
        routing_cost=routing, facility_op_cost=fac_op, link_op_cost=link_op,
        budget_fac=budget_fac, budget_link=budget_link, w0=w0, x0=x0,
    )
