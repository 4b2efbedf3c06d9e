"""Phase-one simplex for LP feasibility over non-negative variables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9


class NumericalFailure(RuntimeError):
    pass


@dataclass
class LPResult:
    feasible: bool
    x: np.ndarray | None
    phase1_value: float
    pivots: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colvec = T[:, col].copy()
    colvec[row] = 0.0
    T -= np.outer(colvec, T[row])


def lp_feasible(
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    n_vars: int | None = None,
    tol: float = FEAS_TOL,
    max_pivots: int = 50_000,
) -> LPResult:
    """Decide whether ``{x >= 0 : A_ub x <= b_ub, A_eq x = b_eq}`` is non-empty.

    Runs phase one of the tableau simplex with Bland's rule, minimizing the
    sum of artificial variables.  The region is declared empty when that
    minimum exceeds ``tol``.
    """
    A_ub = np.zeros((0, n_vars or 0)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).ravel()
    if n_vars is None:
        n_vars = A_ub.shape[1] if A_ub.size else np.atleast_2d(np.asarray(A_eq, float)).shape[1]
    A_eq = np.zeros((0, n_vars)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).ravel()
    if A_ub.shape[0] == 0:
        A_ub = np.zeros((0, n_vars))
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    if m == 0:
        return LPResult(True, np.zeros(n_vars), 0.0, 0)

    # columns: x | slacks (one per inequality) | artificials (as needed) | rhs
    needs_art = []
    rows = []
    rhs = []
    for i in range(m_ub):
        a = np.zeros(n_vars + m_ub)
        a[:n_vars] = A_ub[i]
        a[n_vars + i] = 1.0
        b = b_ub[i]
        if b < 0:
            a, b = -a, -b
            needs_art.append(i)
        rows.append(a)
        rhs.append(b)
    for i in range(m_eq):
        a = np.zeros(n_vars + m_ub)
        a[:n_vars] = A_eq[i]
        b = b_eq[i]
        if b < 0:
            a, b = -a, -b
        rows.append(a)
        rhs.append(b)
        needs_art.append(m_ub + i)
    n_art = len(needs_art)
    width = n_vars + m_ub + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, : n_vars + m_ub] = np.array(rows)
    T[:m, -1] = rhs
    basis = np.empty(m, dtype=np.int64)
    art_cols = []
    for k, i in enumerate(needs_art):
        col = n_vars + m_ub + k
        T[i, col] = 1.0
        basis[i] = col
        art_cols.append(col)
    for i in range(m_ub):
        if i not in needs_art:
            basis[i] = n_vars + i
    # phase-one objective: minimize sum of artificials, stored as reduced costs
    T[m, art_cols] = 1.0
    for i in needs_art:
        T[m] -= T[i]

    pivots = 0
    while True:
        red = T[m, :width]
        entering = np.flatnonzero(red < -tol)
        if entering.size == 0:
            break
        col = int(entering[0])
        colv = T[:m, col]
        pos = np.flatnonzero(colv > tol)
        if pos.size == 0:
            # phase-one objective is bounded below by zero
            raise NumericalFailure("unbounded phase-one direction")
        ratios = T[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise NumericalFailure(f"simplex exceeded {max_pivots} pivots")

    value = -T[m, -1]
    x = np.zeros(width)
    x[basis] = T[:m, -1]
    x = np.maximum(x[:n_vars], 0.0)
    return LPResult(value <= tol, x if value <= tol else None, float(value), pivots)
