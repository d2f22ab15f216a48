import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from habitree.linprog import LpProblem, Status, WarmLp, solve_lp


def test_examples():
    r = solve_lp(LpProblem([1.0], [[1.0]], ["<="], [1.0], maximize=True))
    assert r.status is Status.OPTIMAL and r.x[0] == pytest.approx(1.0) and r.value == pytest.approx(1.0)
    r = solve_lp(LpProblem([1.0], [[1.0], [1.0]], [">=", "<="], [2.0, 1.0], maximize=True))
    assert r.status is Status.INFEASIBLE
    r = solve_lp(LpProblem([1.0, 1.0], [[1.0, 1.0]], ["<="], [1.0], maximize=True))
    assert r.ok and r.value == pytest.approx(1.0)
    r2 = solve_lp(LpProblem([1.0, 1.0], [[1.0, 1.0]], ["<="], [1.0], maximize=True))
    assert np.array_equal(r.x, r2.x)  # deterministic tie-breaking


def test_unbounded_and_free_variables():
    r = solve_lp(LpProblem([1.0, 0.0], [[1.0, -1.0]], ["<="], [1.0], maximize=True))
    assert r.status is Status.UNBOUNDED
    r = solve_lp(LpProblem([1.0], [[1.0]], [">="], [-3.0], lower=[-np.inf]))
    assert r.ok and r.x[0] == pytest.approx(-3.0)
    r = solve_lp(LpProblem([-1.0], np.zeros((0, 1)), [], [], lower=[-2.0], upper=[5.0]))
    assert r.ok and r.x[0] == pytest.approx(5.0)


def test_invalid_input():
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], ["<"], [1.0])
    with pytest.raises(ValueError):
        LpProblem([np.nan], [[1.0]], ["<="], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], ["<="], [1.0], lower=[2.0], upper=[1.0])


def vertex_optimum(c, A, b):
    """Brute force over basic solutions of {A x <= b, x >= 0}."""
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = None
    for rows in itertools.combinations(range(m + n), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            v = c @ x
            best = v if best is None else max(best, v)
    return best


@st.composite
def bounded_lps(draw):
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, 6))
    A = rng.uniform(-1, 1, (m, n))
    b = rng.uniform(0.1, 2.0, m)
    # a box row keeps the problem bounded; b > 0 keeps x = 0 feasible
    A = np.vstack([A, np.ones(n)])
    b = np.append(b, 3.0)
    c = rng.standard_normal(n)
    return c, A, b


@given(bounded_lps())
def test_strong_duality_against_vertex_enumeration(lp):
    c, A, b = lp
    r = solve_lp(LpProblem(c, A, ["<="] * len(b), b, maximize=True))
    assert r.ok
    assert r.value == pytest.approx(vertex_optimum(c, A, b), abs=1e-8)
    # primal feasibility and dual objective
    assert np.all(A @ r.x <= b + 1e-9 * (1 + np.abs(b).max()))
    assert np.all(r.x >= -1e-9)
    y = np.abs(r.duals)
    assert float(b @ y) == pytest.approx(r.value, abs=1e-8)
    # complementary slackness
    assert np.all(np.abs(y * (b - A @ r.x)) <= 1e-8)


@given(st.integers(0, 2 ** 31))
def test_mixed_senses_against_highs(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 8)), int(rng.integers(1, 6))
    x0 = rng.uniform(0, 1, n)
    A = rng.standard_normal((m, n))
    senses = list(rng.choice(["<=", "=", ">="], m))
    b = A @ x0  # x0 is feasible for every sense
    lower = np.where(rng.random(n) < 0.3, -np.inf, -1.0)
    upper = np.full(n, 2.0)
    c = rng.standard_normal(n)
    r = solve_lp(LpProblem(c, A, senses, b, lower, upper))
    A_ub = np.array([A[i] if s == "<=" else -A[i] for i, s in enumerate(senses) if s != "="]).reshape(-1, n)
    b_ub = np.array([b[i] if s == "<=" else -b[i] for i, s in enumerate(senses) if s != "="])
    A_eq = np.array([A[i] for i, s in enumerate(senses) if s == "="]).reshape(-1, n)
    b_eq = np.array([b[i] for i, s in enumerate(senses) if s == "="])
    ref = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                  bounds=list(zip([None if np.isinf(l) else l for l in lower], upper)), method="highs",
                  # presolve can report unbounded problems as infeasible
                  options={"presolve": False})
    if ref.status == 3:
        assert r.status is Status.UNBOUNDED
        return
    assert ref.status == 0 and r.ok
    assert r.value == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
    res = A @ r.x - b
    for s, v in zip(senses, res):
        if s == "<=":
            assert v <= 1e-9 * (1 + np.abs(b).max())
        elif s == ">=":
            assert v >= -1e-9 * (1 + np.abs(b).max())
        else:
            assert abs(v) <= 1e-9 * (1 + np.abs(b).max())


@given(st.integers(0, 2 ** 31))
def test_warm_start_matches_cold(seed):
    rng = np.random.default_rng(seed)
    n, m = 6, 4
    A = np.vstack([rng.uniform(0.1, 1, (m, n)), np.ones(n)])
    b = np.append(rng.uniform(1, 2, m), 1.0)
    senses = ["<="] * m + ["="]
    lp = WarmLp(A, senses, b)
    for _ in range(4):
        c = rng.standard_normal(n)
        warm = lp.solve(c, maximize=True)
        cold = solve_lp(LpProblem(c, A, senses, b, maximize=True))
        assert warm.ok and cold.ok
        assert warm.value == pytest.approx(cold.value, abs=1e-10)
