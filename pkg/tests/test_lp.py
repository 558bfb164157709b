import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netdesign.lp import (EQ, GE, LE, Basis, LpProblem, NumericError,
                          check_certificate, lp_solve)


def test_single_var_ge():
    p = LpProblem()
    x = p.add_var(obj=1.0, lo=0, hi=10)
    p.add_row([(x, 1.0)], GE, 3.0)
    r = lp_solve(p)
    assert r.status == "optimal"
    assert r.x[x] == pytest.approx(3.0)
    assert r.objective == pytest.approx(3.0)
    assert r.duals[0] == pytest.approx(1.0)


def test_infeasible_certificate():
    p = LpProblem()
    x = p.add_var(obj=0.0, lo=0, hi=10)
    p.add_row([(x, 1.0)], GE, 5.0)
    p.add_row([(x, 1.0)], LE, 2.0)
    r = lp_solve(p)
    assert r.status == "infeasible"
    # the multipliers combine the rows into 0*x >= 3
    combined = r.certificate[0] * 1.0 + r.certificate[1] * 1.0
    assert combined == pytest.approx(0.0)
    assert r.certificate @ np.array([5.0, 2.0]) > 0
    assert check_certificate(p, r.certificate)


def test_two_var_knapsack_duals():
    # duals verified against vertex enumeration of the 2-var polytope:
    # vertices (0,0),(1,0),(0,1) with the row binding at obj -1
    p = LpProblem()
    x = p.add_var(obj=-1.0, lo=0, hi=1)
    y = p.add_var(obj=-1.0, lo=0, hi=1)
    p.add_row([(x, 1.0), (y, 1.0)], LE, 1.0)
    r = lp_solve(p)
    assert r.status == "optimal"
    assert r.objective == pytest.approx(-1.0)
    assert r.duals[0] == pytest.approx(-1.0)


def test_unbounded():
    p = LpProblem()
    x = p.add_var(obj=-1.0, lo=0.0)
    y = p.add_var(obj=0.0, lo=0, hi=5)
    p.add_row([(x, 1.0), (y, -2.0)], LE, 0.0)
    r = lp_solve(p)
    assert r.status == "unbounded"


def test_equality_rows_and_free_slack():
    p = LpProblem()
    x = p.add_var(obj=2.0, lo=0, hi=4)
    y = p.add_var(obj=1.0, lo=0, hi=4)
    p.add_row([(x, 1.0), (y, 1.0)], EQ, 5.0)
    r = lp_solve(p)
    assert r.status == "optimal"
    assert r.objective == pytest.approx(2.0 * 1.0 + 1.0 * 4.0)


def test_rejects_free_variable():
    p = LpProblem()
    with pytest.raises(ValueError):
        p.add_var(obj=1.0, lo=-math.inf, hi=math.inf)


def test_rejects_bad_row():
    p = LpProblem()
    p.add_var()
    with pytest.raises(ValueError):
        p.add_row([(3, 1.0)], LE, 0.0)
    with pytest.raises(ValueError):
        p.add_row([(0, 1.0)], "<", 0.0)


def _random_lp(rng, n_max=20, m_max=16):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    p = LpProblem()
    lo = rng.uniform(-5, 0, size=n)
    hi = lo + rng.uniform(0, 10, size=n)
    for j in range(n):
        p.add_var(obj=float(rng.normal()), lo=float(lo[j]), hi=float(hi[j]))
    for _ in range(m):
        coeffs = [(j, float(rng.normal())) for j in range(n) if rng.random() < 0.6]
        sense = [LE, EQ, GE][int(rng.integers(3))]
        p.add_row(coeffs, sense, float(rng.normal() * 3))
    return p


def _dual_objective(p, r):
    """y'b plus reduced-cost-weighted nonbasic bounds; equals the primal
    objective at optimality (strong duality for bounded simplex)."""
    b = np.array([row[2] for row in p.rows])
    val = float(r.duals @ b)
    for j in range(p.n_vars):
        rc = r.reduced_costs[j]
        if abs(rc) < 1e-9:
            continue
        val += rc * (p.lo[j] if rc > 0 else p.hi[j])
    return val


def test_random_lp_duality_and_certificates():
    rng = np.random.default_rng(1234)
    n_opt = n_inf = 0
    for _ in range(500):
        p = _random_lp(rng)
        r = lp_solve(p)
        if r.status == "optimal":
            n_opt += 1
            gap = abs(r.objective - _dual_objective(p, r))
            assert gap <= 1e-7 * (1 + abs(r.objective)) * 10
        elif r.status == "infeasible":
            n_inf += 1
            assert check_certificate(p, r.certificate)
    assert n_opt > 100 and n_inf > 20  # the mix actually exercises both paths


def test_deterministic_bases():
    rng = np.random.default_rng(7)
    for _ in range(25):
        p = _random_lp(rng, n_max=10, m_max=8)
        r1 = lp_solve(p)
        r2 = lp_solve(p)
        assert r1.status == r2.status
        if r1.basis is not None:
            assert r1.basis.cols == r2.basis.cols
            assert r1.iterations == r2.iterations


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(99)
    for _ in range(40):
        p = _random_lp(rng, n_max=12, m_max=10)
        cold = lp_solve(p)
        if cold.status != "optimal":
            continue
        # perturb one bound, solve cold and warm, compare
        lo = np.array(p.lo)
        hi = np.array(p.hi)
        j = int(rng.integers(p.n_vars))
        hi2 = hi.copy()
        hi2[j] = max(lo[j], hi[j] * 0.5)
        cold2 = lp_solve(p, lo, hi2)
        warm2 = lp_solve(p, lo, hi2, basis=cold.basis)
        assert cold2.status == warm2.status
        if cold2.status == "optimal":
            assert warm2.objective == pytest.approx(cold2.objective, abs=1e-7, rel=1e-9)


def test_warm_start_after_row_growth():
    p = LpProblem()
    x = p.add_var(obj=-1.0, lo=0, hi=10)
    y = p.add_var(obj=-2.0, lo=0, hi=10)
    p.add_row([(x, 1.0), (y, 1.0)], LE, 12.0)
    r1 = lp_solve(p)
    p.add_row([(y, 1.0)], LE, 4.0)
    r2 = lp_solve(p, basis=r1.basis)
    assert r2.status == "optimal"
    assert r2.objective == pytest.approx(-1.0 * 8 - 2.0 * 4)


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_status_matches_reference_semantics(seed):
    """Optimal results are primal feasible within tolerance."""
    rng = np.random.default_rng(seed)
    p = _random_lp(rng, n_max=8, m_max=6)
    r = lp_solve(p)
    if r.status != "optimal":
        return
    x = r.x
    for j in range(p.n_vars):
        assert p.lo[j] - 1e-6 <= x[j] <= p.hi[j] + 1e-6
    for coeffs, sense, rhs in p.rows:
        lhs = sum(c * x[j] for j, c in coeffs)
        if sense == LE:
            assert lhs <= rhs + 1e-6
        elif sense == GE:
            assert lhs >= rhs - 1e-6
        else:
            assert lhs == pytest.approx(rhs, abs=1e-6)
