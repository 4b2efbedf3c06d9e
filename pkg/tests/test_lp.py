import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from wslsim.lp import NumericalFailure, lp_feasible


def vertex_feasible(A, b, tol=1e-7):
    """Non-empty iff some basic solution of {x >= 0, A x <= b} is feasible."""
    n = A.shape[1]
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    for rows in itertools.combinations(range(len(G)), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + tol):
            return True
    return False


def test_one_dimensional_examples():
    # x <= 1, x >= 0.5
    assert lp_feasible([[1.0], [-1.0]], [1.0, -0.5]).feasible
    # x <= 1, x >= 2
    res = lp_feasible([[1.0], [-1.0]], [1.0, -2.0])
    assert not res.feasible and res.phase1_value > 1e-9


def test_no_constraints_and_equalities():
    assert lp_feasible(None, None, n_vars=3).feasible
    res = lp_feasible(A_eq=[[1.0, 1.0]], b_eq=[2.0], n_vars=2)
    assert res.feasible and res.x.sum() == pytest.approx(2.0)
    assert not lp_feasible(A_eq=[[1.0, 1.0]], b_eq=[-1.0], n_vars=2).feasible


def test_random_small_lps_against_vertex_enumeration():
    rng = np.random.default_rng(2024)
    agree = 0
    kinds = set()
    for _ in range(100):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 6))
        A = rng.integers(-4, 5, size=(m, n)).astype(float)
        b = rng.integers(-6, 7, size=m).astype(float)
        got = lp_feasible(A, b)
        want = vertex_feasible(A, b)
        assert got.feasible == want, (A, b)
        kinds.add(want)
        if got.feasible:
            assert np.all(got.x >= 0) and np.all(A @ got.x <= b + 1e-8)
        agree += 1
    assert agree == 100 and kinds == {True, False}


def test_random_larger_lps_against_scipy():
    rng = np.random.default_rng(7)
    for _ in range(60):
        n, m = int(rng.integers(5, 30)), int(rng.integers(5, 30))
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        ref = linprog(np.zeros(n), A_ub=A, b_ub=b, bounds=[(0, None)] * n, method="highs")
        got = lp_feasible(A, b)
        assert got.feasible == (ref.status == 0)
        if got.feasible:
            assert np.all(A @ got.x <= b + 1e-8)


def test_degenerate_problem_terminates():
    # many redundant constraints through the same vertex
    A = np.array([[1.0, 1.0]] * 6 + [[-1.0, -1.0]] * 6 + [[1.0, -1.0], [-1.0, 1.0]])
    b = np.array([1.0] * 6 + [-1.0] * 6 + [0.0, 0.0])
    res = lp_feasible(A, b)
    assert res.feasible and res.x == pytest.approx([0.5, 0.5])


def test_pivot_limit():
    A = -np.eye(6) - np.ones((6, 6))
    b = -np.ones(6)
    with pytest.raises(NumericalFailure):
        lp_feasible(A, b, max_pivots=1)
