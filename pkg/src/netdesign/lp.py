"""Bounded-variable primal simplex.

Minimises c'x subject to sparse rows (<=, =, >=) and box bounds.  Rows are
held in equality form with one slack each; the slack bounds encode the
sense.  The basis inverse is kept explicitly (dense) and refactorised
periodically, which is plenty at the problem sizes this package targets.

Pivot rule is Dantzig with lowest-index tie-breaking, falling back to
Bland's rule after a run of degenerate steps, so identical inputs always
produce identical bases.  Optimal results carry row duals and reduced
costs; infeasible results carry a row-multiplier certificate that proves
the aggregated row cannot be satisfied within the variable bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    from scipy.linalg.blas import dger as _dger
except ImportError:  # pragma: no cover
    _dger = None

TOL_FEAS = 1e-7
TOL_OBJ = 1e-7
TOL_PIVOT = 1e-9
PIVOT_ACCEPT = 2e-7   # smallest rate admitted to the ratio test / as a pivot

_REFACTOR_EVERY = 200
_DEGENERATE_RUN = 60

LE, EQ, GE = "<=", "==", ">="


class NumericError(RuntimeError):
    """The solver could not certify a correct status within its retry budget."""


_PROBLEM_COUNTER = iter(range(1, 1 << 62))


@dataclass
class LpProblem:
    """A growable LP: add variables and rows, then call :func:`lp_solve`.

    Row coefficients are append-only (right-hand sides may be rewritten),
    which lets solver-side caches key on the problem nonce and shape.
    """

    obj: list[float] = field(default_factory=list)
    lo: list[float] = field(default_factory=list)
    hi: list[float] = field(default_factory=list)
    rows: list[tuple[list[tuple[int, float]], str, float]] = field(default_factory=list)
    nonce: int = field(default_factory=lambda: next(_PROBLEM_COUNTER))

    def add_var(self, obj: float = 0.0, lo: float = 0.0, hi: float = math.inf) -> int:
        if lo > hi:
            raise ValueError(f"lo {lo} > hi {hi}")
        if math.isinf(lo) and math.isinf(hi):
            raise ValueError("free variables are not supported")
        if not math.isfinite(obj):
            raise ValueError("objective coefficient must be finite")
        self.obj.append(obj)
        self.lo.append(lo)
        self.hi.append(hi)
        self._dense = None
        return len(self.obj) - 1

    def add_row(self, coeffs: list[tuple[int, float]], sense: str, rhs: float) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {sense!r}")
        n = len(self.obj)
        for j, c in coeffs:
            if not 0 <= j < n:
                raise ValueError(f"row references unknown variable {j}")
            if not math.isfinite(c):
                raise ValueError("row coefficient must be finite")
        self.rows.append((list(coeffs), sense, float(rhs)))
        return len(self.rows) - 1

    @property
    def n_vars(self) -> int:
        return len(self.obj)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def dense(self) -> np.ndarray:
        """Structural constraint matrix (n_rows x n_vars), cached."""
        cached = getattr(self, "_dense", None)
        if cached is not None and cached.shape == (self.n_rows, self.n_vars):
            return cached
        A = np.zeros((self.n_rows, self.n_vars))
        for r, (coeffs, _, _) in enumerate(self.rows):
            for j, c in coeffs:
                A[r, j] += c
        self._dense = A
        return A


@dataclass
class Basis:
    """Encoded basis: column j >= 0 is structural, -1 - r is the slack of row r."""

    cols: list[int]
    at_upper: set[int]


@dataclass
class LpResult:
    status: str                       # 'optimal' | 'infeasible' | 'unbounded'
    x: np.ndarray | None
    objective: float | None
    duals: np.ndarray | None          # per row; <= rows get duals <= 0 (min sense)
    reduced_costs: np.ndarray | None  # per structural variable
    certificate: np.ndarray | None    # row multipliers proving infeasibility
    basis: Basis | None
    iterations: int = 0


def _slack_bounds(sense: str) -> tuple[float, float]:
    if sense == LE:
        return 0.0, math.inf
    if sense == GE:
        return -math.inf, 0.0
    return 0.0, 0.0


def check_certificate(p: LpProblem, y: np.ndarray,
                      lo: np.ndarray | None = None, hi: np.ndarray | None = None,
                      tol: float = 1e-7) -> bool:
    """Verify by direct multiplication that y certifies infeasibility.

    The combined row says  (y'A) x + y's = y'b  for any feasible (x, s);
    infeasibility is proven when the box maximum of the left side falls
    short of y'b.
    """
    A = p.dense()
    lo = np.asarray(p.lo if lo is None else lo, dtype=float)
    hi = np.asarray(p.hi if hi is None else hi, dtype=float)
    w = y @ A
    w[np.abs(w) < 1e-9] = 0.0
    best = 0.0
    for j in range(p.n_vars):
        if w[j] > 0:
            if math.isinf(hi[j]):
                return False
            best += w[j] * hi[j]
        elif w[j] < 0:
            if math.isinf(lo[j]):
                return False
            best += w[j] * lo[j]
    for r, (_, sense, _) in enumerate(p.rows):
        slo, shi = _slack_bounds(sense)
        yr = y[r] if abs(y[r]) >= 1e-9 else 0.0
        if yr > 0:
            if math.isinf(shi):
                return False
            best += yr * shi
        elif yr < 0:
            if math.isinf(slo):
                return False
            best += yr * slo
    rhs = float(y @ np.array([row[2] for row in p.rows]))
    scale = 1.0 + abs(rhs)
    return best < rhs - tol * scale


class _BinvCache:
    """Small LRU of basis inverses keyed by (problem nonce, m, n, basis
    columns).  Coefficients are append-only and the nonce is unique per
    problem, so a key hit is guaranteed fresh.  Lets branch-and-bound
    children start from the parent's inverse without refactorising."""

    def __init__(self, max_bytes: int = 64 << 20):
        self.max_bytes = max_bytes
        self.used = 0
        self.data: dict[tuple, np.ndarray] = {}
        self.order: list[tuple] = []

    def get(self, key: tuple) -> np.ndarray | None:
        hit = self.data.get(key)
        if hit is not None:
            self.order.remove(key)
            self.order.append(key)
        return hit

    def put(self, key: tuple, binv: np.ndarray):
        if binv.nbytes > self.max_bytes // 4:
            return
        if key in self.data:
            self.order.remove(key)
            self.used -= self.data[key].nbytes
        while self.used + binv.nbytes > self.max_bytes and self.order:
            self.used -= self.data.pop(self.order.pop(0)).nbytes
        self.data[key] = binv.copy()
        self.used += binv.nbytes
        self.order.append(key)


_BINV_CACHE = _BinvCache()


class _Simplex:
    def __init__(self, p: LpProblem, lo, hi, basis: Basis | None):
        self.p = p
        self.m = p.n_rows
        self.n = p.n_vars
        self.A = p.dense()
        self._outer_buf = np.empty((self.m, self.m))
        self.b = np.array([row[2] for row in p.rows], dtype=float)
        slo, shi = [], []
        for (_, sense, _) in p.rows:
            a, b2 = _slack_bounds(sense)
            slo.append(a)
            shi.append(b2)
        self.lo = np.concatenate([np.asarray(p.lo if lo is None else lo, dtype=float), slo])
        self.hi = np.concatenate([np.asarray(p.hi if hi is None else hi, dtype=float), shi])
        if np.any(self.lo > self.hi):
            raise ValueError("variable with lo > hi")
        self.c = np.concatenate([np.asarray(p.obj, dtype=float), np.zeros(self.m)])
        self.ncols = self.n + self.m
        self.x = np.zeros(self.ncols)
        self.in_basis = np.zeros(self.ncols, dtype=bool)
        self.basic_pos = np.full(self.ncols, -1, dtype=int)
        self.iterations = 0
        self._init_basis(basis)

    # column encode/decode: structural j -> j, slack of row r -> n + r
    def _decode(self, enc: int) -> int:
        return enc if enc >= 0 else self.n + (-1 - enc)

    def _encode(self, col: int) -> int:
        return col if col < self.n else -1 - (col - self.n)

    def col(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.A[:, j]
        e = np.zeros(self.m)
        e[j - self.n] = 1.0
        return e

    def _init_basis(self, basis: Basis | None):
        cols = None
        if basis is not None:
            cand = [self._decode(e) for e in basis.cols]
            present = set(cand)
            # pad with slacks of rows added since the basis was made
            for r in range(self.m):
                if len(cand) == self.m:
                    break
                if self.n + r not in present:
                    cand.append(self.n + r)
                    present.add(self.n + r)
            if len(cand) == self.m and all(0 <= cj < self.ncols for cj in cand) \
                    and len(present) == self.m:
                cols = cand
        if cols is None:
            cols = [self.n + r for r in range(self.m)]
            basis = None
        self.basis = np.array(cols, dtype=int)
        at_upper = set()
        if basis is not None:
            at_upper = {self._decode(e) for e in basis.at_upper}
        basic = set(self.basis.tolist())
        # status per column: 0 basic, 1 nonbasic at lower, 2 nonbasic at upper
        self.status = np.zeros(self.ncols, dtype=np.int8)
        for j in range(self.ncols):
            if j in basic:
                continue
            if j in at_upper and math.isfinite(self.hi[j]):
                self.x[j] = self.hi[j]
                self.status[j] = 2
            elif math.isfinite(self.lo[j]):
                self.x[j] = self.lo[j]
                self.status[j] = 1
            else:
                self.x[j] = self.hi[j]
                self.status[j] = 2
        if not self._refactor(use_cache=True):
            self._reset_to_slack_basis()

    def _basis_matrix(self) -> np.ndarray:
        B = np.zeros((self.m, self.m))
        for pos, j in enumerate(self.basis):
            B[:, pos] = self.col(j)
        return B

    def _cache_key(self) -> tuple:
        return (self.p.nonce, self.m, self.n, self.basis.tobytes())

    def _refactor(self, use_cache: bool = False) -> bool:
        binv = _BINV_CACHE.get(self._cache_key()) if use_cache else None
        if binv is None:
            try:
                binv = np.linalg.inv(self._basis_matrix())
            except np.linalg.LinAlgError:
                return False
            if not np.all(np.isfinite(binv)):
                return False
        self.Binv = np.asfortranarray(binv)  # dger updates in place on F-order
        self.in_basis[:] = False
        self.basic_pos[:] = -1
        for pos, j in enumerate(self.basis):
            self.in_basis[j] = True
            self.basic_pos[j] = pos
        self.status[self.basis] = 0
        self._recompute_basics()
        return True

    def _recompute_basics(self):
        xs = self.x[: self.n].copy()
        xs[self.in_basis[: self.n]] = 0.0
        rhs = self.b - self.A @ xs
        slack_vals = self.x[self.n :].copy()
        slack_vals[self.in_basis[self.n :]] = 0.0
        rhs -= slack_vals
        self.x[self.basis] = self.Binv @ rhs

    def _infeas(self) -> np.ndarray:
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        return np.maximum(lo - xb, 0.0) + np.maximum(xb - hi, 0.0)

    def _phase1_cost(self) -> np.ndarray:
        xb = self.x[self.basis]
        d = np.zeros(self.m)
        d[xb < self.lo[self.basis] - TOL_FEAS] = -1.0
        d[xb > self.hi[self.basis] + TOL_FEAS] = 1.0
        return d

    def _price(self, cb: np.ndarray, phase1: bool) -> tuple[int, float, np.ndarray]:
        """Return (entering col, direction, y) or (-1, 0, y) if none."""
        y = cb @ self.Binv
        r = np.empty(self.ncols)
        r[: self.n] = -(y @ self.A)
        r[self.n :] = -y
        if not phase1:
            r += self.c
        movable = self.lo != self.hi
        elig_lo = (self.status == 1) & movable & (r < -TOL_OBJ)
        elig_hi = (self.status == 2) & movable & (r > TOL_OBJ)
        any_lo, any_hi = bool(elig_lo.any()), bool(elig_hi.any())
        if not any_lo and not any_hi:
            return -1, 0.0, y
        if self._bland:
            j = int(np.nonzero(elig_lo | elig_hi)[0][0])
            return j, (1.0 if elig_lo[j] else -1.0), y
        score = np.where(elig_lo, -r, np.where(elig_hi, r, -math.inf))
        j = int(np.argmax(score))
        return j, (1.0 if elig_lo[j] else -1.0), y

    def _ratio_phase(self, q: int, direction: float):
        """Breakpoint ratio test: step until a basic variable hits (or, in
        phase 1, recovers to) a bound, or the entering variable flips bounds.
        Returns (delta, leave_pos, u); leave_pos -1 means a bound flip."""
        u = self.Binv @ self.col(q)
        rates = -direction * u  # d x_basic / d delta
        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        below = xb < lob - TOL_FEAS
        above = xb > hib + TOL_FEAS
        up = rates > PIVOT_ACCEPT
        down = rates < -PIVOT_ACCEPT
        with np.errstate(divide="ignore", invalid="ignore"):
            caps = np.where(
                up & below, (lob - xb) / rates,            # recovers feasibility at lo
                np.where(up & ~above, (hib - xb) / rates,  # blocked at hi (inf if none)
                np.where(down & above, (hib - xb) / rates, # recovers feasibility at hi
                np.where(down & ~below, (xb - lob) / (-rates), math.inf))))
        caps = np.where(np.isnan(caps), math.inf, np.maximum(caps, 0.0))
        delta = self.hi[q] - self.lo[q]
        best = float(caps.min()) if self.m else math.inf
        if best <= delta + TOL_PIVOT:
            near = np.nonzero(caps <= best + TOL_PIVOT)[0]
            if self._bland:
                leave_pos = int(near[np.argmin(self.basis[near])])
            else:
                absu = np.abs(u[near])
                top = near[absu >= absu.max() - 1e-15]
                leave_pos = int(top[np.argmin(self.basis[top])])
            return min(best, delta), leave_pos, u
        return delta, -1, u

    def _pivot(self, q: int, direction: float, delta: float, leave_pos: int, u: np.ndarray):
        self.x[q] += direction * delta
        self.x[self.basis] -= direction * delta * u
        if leave_pos < 0:
            self.status[q] = 2 if self.status[q] == 1 else 1  # bound flip
            return
        leave = self.basis[leave_pos]
        piv = u[leave_pos]
        if abs(piv) < TOL_PIVOT:
            raise NumericError("zero pivot")  # unreachable given PIVOT_ACCEPT
        # snap the leaving variable onto the bound it hit
        xl = self.x[leave]
        if math.isfinite(self.lo[leave]) and abs(xl - self.lo[leave]) <= abs(xl - self.hi[leave]):
            self.x[leave] = self.lo[leave]
            self.status[leave] = 1
        else:
            self.x[leave] = self.hi[leave]
            self.status[leave] = 2
        self.status[q] = 0
        self.basis[leave_pos] = q
        self.in_basis[q] = True
        self.in_basis[leave] = False
        self.basic_pos[q] = leave_pos
        self.basic_pos[leave] = -1
        # product-form update of the explicit inverse
        row = self.Binv[leave_pos, :] / piv
        scale = u.copy()
        scale[leave_pos] = 0.0
        if _dger is not None and self.Binv.flags.f_contiguous:
            _dger(-1.0, scale, row, a=self.Binv, overwrite_a=1)
        else:
            np.multiply(scale[:, None], row[None, :], out=self._outer_buf)
            self.Binv -= self._outer_buf
        self.Binv[leave_pos, :] = row

    def _reset_to_slack_basis(self):
        """Last-resort recovery: slack basis, structural vars snapped to the
        nearest finite bound."""
        self.basis = np.array([self.n + r for r in range(self.m)], dtype=int)
        for j in range(self.n):
            lo, hi = self.lo[j], self.hi[j]
            if math.isfinite(lo) and (not math.isfinite(hi)
                                      or abs(self.x[j] - lo) <= abs(self.x[j] - hi)):
                self.x[j] = lo
                self.status[j] = 1
            else:
                self.x[j] = hi
                self.status[j] = 2
        if not self._refactor():
            raise NumericError("could not factorise the slack basis")

    def solve(self) -> LpResult:
        max_iter = 2000 + 200 * (self.m + self.n)
        self._bland = False
        degenerate_run = 0
        refactor_retries = 0
        resets = 0
        while True:
            self.iterations += 1
            if self.iterations > max_iter:
                raise NumericError(f"iteration limit {max_iter} exceeded")
            if self.iterations % _REFACTOR_EVERY == 0:
                if not self._refactor():
                    resets += 1
                    if resets > 3:
                        raise NumericError("basis kept becoming singular")
                    self._reset_to_slack_basis()
            infeas = self._infeas()
            phase1 = bool(np.any(infeas > TOL_FEAS))
            cb = self._phase1_cost() if phase1 else self.c[self.basis]
            q, direction, y = self._price(cb, phase1)
            if q < 0:
                if phase1:
                    # re-verify on a fresh factorisation before certifying
                    if refactor_retries < 3:
                        refactor_retries += 1
                        if not self._refactor():
                            resets += 1
                            if resets > 3:
                                raise NumericError("basis kept becoming singular")
                            self._reset_to_slack_basis()
                        continue
                    if check_certificate(self.p, y, self.lo[: self.n], self.hi[: self.n]):
                        _BINV_CACHE.put(self._cache_key(), self.Binv)
                        return LpResult("infeasible", None, None, None, None, y,
                                        self._basis_out(), self.iterations)
                    raise NumericError("stalled infeasible without a valid certificate")
                _BINV_CACHE.put(self._cache_key(), self.Binv)
                return self._optimal(y)
            delta, leave_pos, u = self._ratio_phase(q, direction)
            if math.isinf(delta):
                if phase1:
                    raise NumericError("phase-1 direction unbounded")
                return LpResult("unbounded", None, None, None, None, None,
                                self._basis_out(), self.iterations)
            if delta <= TOL_PIVOT:
                degenerate_run += 1
                if degenerate_run >= _DEGENERATE_RUN:
                    self._bland = True
            else:
                degenerate_run = 0
                self._bland = False
            self._pivot(q, direction, delta, leave_pos, u)

    def _basis_out(self) -> Basis:
        cols = [self._encode(int(j)) for j in self.basis]
        at_upper = {self._encode(int(j)) for j in np.nonzero(self.status == 2)[0]}
        return Basis(cols, at_upper)

    def _optimal(self, y: np.ndarray) -> LpResult:
        x = self.x[: self.n].copy()
        obj = float(self.c[: self.n] @ x)
        w = y @ self.A
        reduced = self.c[: self.n] - w
        # strong duality audit: c'x == y'b + sum of nonbasic reduced costs * values
        nb = ~self.in_basis[: self.n]
        dual_obj = float(y @ self.b) + float(reduced[nb] @ self.x[: self.n][nb])
        if abs(obj - dual_obj) > TOL_OBJ * (1.0 + abs(obj)) * 100:
            raise NumericError(f"duality gap {obj - dual_obj:.3e} out of tolerance")
        return LpResult("optimal", x, obj, y.copy(), reduced, None,
                        self._basis_out(), self.iterations)


def lp_solve(p: LpProblem, lo: np.ndarray | None = None, hi: np.ndarray | None = None,
             basis: Basis | None = None) -> LpResult:
    """Solve the LP, optionally overriding variable bounds (used by the
    branch-and-bound tree) and warm-starting from a previous basis."""
    if p.n_rows == 0:
        # pure box problem
        x = np.empty(p.n_vars)
        los = np.asarray(p.lo if lo is None else lo, dtype=float)
        his = np.asarray(p.hi if hi is None else hi, dtype=float)
        if np.any(los > his):
            raise ValueError("variable with lo > hi")
        for j, c in enumerate(p.obj):
            if c >= 0:
                if math.isinf(los[j]):
                    return LpResult("unbounded", None, None, None, None, None, None, 0)
                x[j] = los[j]
            else:
                if math.isinf(his[j]):
                    return LpResult("unbounded", None, None, None, None, None, None, 0)
                x[j] = his[j]
        obj = float(np.asarray(p.obj) @ x)
        return LpResult("optimal", x, obj, np.zeros(0), np.asarray(p.obj, dtype=float),
                        None, None, 0)
    try:
        return _Simplex(p, lo, hi, basis).solve()
    except NumericError:
        if basis is not None:
            return _Simplex(p, lo, hi, None).solve()  # cold-start retry
        raise
