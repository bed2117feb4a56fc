"""Matrix-game solver: a tableau simplex on the classic LP reduction.

For a payoff matrix A (row player maximises, column player minimises) with
every entry positive, the column player's problem

    maximise sum(y)  subject to  A y <= 1,  y >= 0

has value 1/v, where v is the game value; the column mix is y / sum(y) and
the row mix is read off the dual prices on the slack columns. The start
basis (all slacks) is feasible, so there is no phase one.

Integer mode keeps the tableau in integers and divides by the previous
pivot after each step, which is exact and avoids Fraction overhead. It
uses Bland's rule throughout. Float mode pivots on the steepest reduced
cost and falls back to Bland's rule on long runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import ParameterError, StateError


@dataclass
class GameSolution:
    value: object          # Fraction in exact mode, float otherwise
    row_mix: list
    col_mix: list
    pivots: int
    exact: bool


def _bland_entering(obj, n_cols, tol):
    for c in range(n_cols):
        if obj[c] < -tol:
            return c
    return None


def _ratio_row(T, c, basis, exact, tol):
    best, best_row = None, None
    rhs = T.shape[1] - 1
    for r in range(T.shape[0] - 1):
        a = T[r, c]
        if a <= tol:
            continue
        if best is None:
            best, best_row = (T[r, rhs], a), r
            continue
        num, den = best
        # compare T[r,rhs]/a with num/den without dividing
        lhs, rhs_ = T[r, rhs] * den, num * a
        smaller = lhs < rhs_ if exact else lhs < rhs_ - tol * abs(num * a)
        tie = lhs == rhs_ if exact else abs(lhs - rhs_) <= tol * max(1.0, abs(num * a))
        if smaller or (tie and basis[r] < basis[best_row]):
            best, best_row = (T[r, rhs], a), r
    return best_row


def _ratio_row_float(T, c, basis, tol):
    col = T[:-1, c]
    ok = col > tol
    if not ok.any():
        return None
    ratios = np.full(len(col), np.inf)
    ratios[ok] = T[:-1, -1][ok] / col[ok]
    best = ratios.min()
    rows = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
    return int(min(rows, key=lambda r: basis[r]))


def solve_positive_game(A, exact=True, max_pivots=100_000):
    """Solve the zero-sum game with integer (exact) or real payoff matrix A,
    all entries > 0. Rows maximise."""
    m, n = len(A), len(A[0])
    tol = 0 if exact else 1e-12
    if exact:
        T = np.empty((m + 1, n + m + 1), dtype=object)
        T[:, :] = 0
        for r in range(m):
            for c in range(n):
                v = A[r][c]
                if int(v) != v or v <= 0:
                    raise ParameterError("exact mode needs positive integer payoffs")
                T[r, c] = int(v)
    else:
        A = np.asarray(A, dtype=np.float64)
        if not np.all(A > 0):
            raise ParameterError("payoffs must be positive")
        # unit-scale payoffs; with large entries the fixed tolerances misjudge
        # optimality and basic variables drift negative
        scale = A.max()
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n] = A / scale
    for r in range(m):
        T[r, n + r] = 1
        T[r, -1] = 1
    T[m, :n] = -1
    basis = list(range(n, n + m))
    det = 1
    pivots = 0
    while True:
        if exact or pivots > 50 * (n + m):
            c = _bland_entering(T[m], n + m, tol)
        else:
            # steepest reduced cost; Bland takes over if that ever stalls
            c = int(np.argmin(T[m, : n + m]))
            c = c if T[m, c] < -tol else None
        if c is None:
            break
        r = _ratio_row(T, c, basis, exact, tol) if exact else _ratio_row_float(T, c, basis, tol)
        if r is None:
            raise StateError("unbounded LP; payoff matrix must be positive")
        p = T[r, c]
        if exact:
            row = T[r].copy()
            T = (T * p - np.outer(T[:, c], row)) // det
            T[r] = row
            det = p
        else:
            row = T[r] / p
            T -= np.outer(T[:, c], row)
            T[r] = row
        basis[r] = c
        pivots += 1
        if pivots > max_pivots:
            raise StateError(f"simplex did not terminate in {max_pivots} pivots")
    sol = _read_solution(T, basis, m, n, det, exact, pivots)
    if not exact:
        sol.value *= scale
        x, y = np.asarray(sol.row_mix), np.asarray(sol.col_mix)
        slack = 1e-9 * max(1.0, abs(sol.value))
        if (A @ y).max() > sol.value + slack or (x @ A).min() < sol.value - slack:
            raise StateError("floating-point simplex lost optimality; try exact mode")
    return sol


def _read_solution(T, basis, m, n, det, exact, pivots):
    if exact:
        obj = Fraction(int(T[m, -1]), int(det))
        y = [Fraction(0)] * n
        for r, b in enumerate(basis):
            if b < n:
                y[b] = Fraction(int(T[r, -1]), int(det))
        x = [Fraction(int(T[m, n + r]), int(det)) for r in range(m)]
        value = 1 / obj
        return GameSolution(value, [xi * value for xi in x], [yi * value for yi in y], pivots, True)
    obj = float(T[m, -1])
    y = np.zeros(n)
    for r, b in enumerate(basis):
        if b < n:
            y[b] = T[r, -1]
    x = np.maximum(np.asarray(T[m, n:n + m], dtype=np.float64), 0.0)
    y = np.maximum(y, 0.0)
    value = 1.0 / obj
    return GameSolution(value, list(x / x.sum()), list(y / y.sum()), pivots, False)
