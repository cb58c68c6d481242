"""Dense two-phase simplex for the small linear programs built by the
forecast combiner.

Problems here are tiny (at most a few hundred variables and rows), so a
dense tableau with Bland's pivoting rule is the right trade: Bland's rule
guarantees termination (no cycling) and makes the returned vertex
deterministic, which the combiner's tie-breaking relies on.

The solver accepts the general form

    minimize    c @ x
    subject to  a_ub @ x <= b_ub
                a_eq @ x == b_eq
                lo <= x <= hi      (lo finite; hi may be None)

and raises LpInfeasibleError / LpUnboundedError by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TOL = 1e-9
_PIVOT_TOL = 1e-10


class LpInfeasibleError(ValueError):
    """The constraint set is empty."""


class LpUnboundedError(ValueError):
    """The objective decreases without bound over the feasible set."""


@dataclass(frozen=True)
class LpProblem:
    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    bounds: tuple[tuple[float, float | None], ...]

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = len(c)
        a_ub = np.asarray(self.a_ub, dtype=float).reshape(-1, n)
        a_eq = np.asarray(self.a_eq, dtype=float).reshape(-1, n)
        b_ub = np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        if a_ub.shape[0] != b_ub.shape[0]:
            raise ValueError("a_ub/b_ub row mismatch")
        if a_eq.shape[0] != b_eq.shape[0]:
            raise ValueError("a_eq/b_eq row mismatch")
        if len(self.bounds) != n:
            raise ValueError(f"expected {n} bounds, got {len(self.bounds)}")
        for j, (lo, hi) in enumerate(self.bounds):
            if not np.isfinite(lo):
                raise ValueError(f"variable {j}: lower bound must be finite")
            if hi is not None and hi < lo:
                raise ValueError(f"variable {j}: upper bound {hi} below lower bound {lo}")
        for name, arr in (("c", c), ("a_ub", a_ub), ("b_ub", b_ub), ("a_eq", a_eq), ("b_eq", b_eq)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @property
    def n(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])


def _bland_iterate(tableau: np.ndarray, basis: np.ndarray, n_cols: int, max_iter: int) -> int:
    """Run simplex iterations under Bland's rule until optimal.

    The cost row is tableau[-1, :n_cols]; returns the iteration count and
    raises LpUnboundedError when a pivot column has no positive entries.
    """
    iterations = 0
    m = len(basis)
    while True:
        costs = tableau[-1, :n_cols]
        candidates = np.nonzero(costs < -_TOL)[0]
        if len(candidates) == 0:
            return iterations
        col = int(candidates[0])  # Bland: smallest improving index
        column = tableau[:m, col]
        rows = np.nonzero(column > _PIVOT_TOL)[0]
        if len(rows) == 0:
            raise LpUnboundedError("objective is unbounded below")
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[np.nonzero(ratios <= best + _PIVOT_TOL)[0]]
        row = int(ties[np.argmin(basis[ties])])  # Bland: smallest basic index leaves
        _pivot(tableau, row, col)
        basis[row] = col
        iterations += 1
        if iterations > max_iter:
            raise RuntimeError(f"simplex did not terminate within {max_iter} iterations")


def solve_lp(problem: LpProblem) -> LpSolution:
    """Exact vertex optimum of the problem (feasibility tolerance 1e-9)."""
    n = problem.n
    lows = np.array([lo for lo, _ in problem.bounds])

    # Shift every variable to xhat = x - lo >= 0; finite upper bounds become
    # extra <= rows.
    a_ub = problem.a_ub
    b_ub = problem.b_ub - (a_ub @ lows if a_ub.size else np.zeros(len(problem.b_ub)))
    a_eq = problem.a_eq
    b_eq = problem.b_eq - (a_eq @ lows if a_eq.size else np.zeros(len(problem.b_eq)))
    extra_rows = []
    extra_rhs = []
    for j, (lo, hi) in enumerate(problem.bounds):
        if hi is not None:
            row = np.zeros(n)
            row[j] = 1.0
            extra_rows.append(row)
            extra_rhs.append(hi - lo)
    if extra_rows:
        a_ub = np.vstack([a_ub, np.array(extra_rows)]) if a_ub.size else np.array(extra_rows)
        b_ub = np.concatenate([b_ub, np.array(extra_rhs)])

    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    n_slack = m_ub
    if m == 0:
        # Bounds-only problem: each variable sits at whichever bound its cost
        # prefers; unbounded if a negative cost has no upper bound.
        x_hat = np.zeros(n)
        for j, (lo, hi) in enumerate(problem.bounds):
            if problem.c[j] < 0:
                if hi is None:
                    raise LpUnboundedError("objective is unbounded below")
                x_hat[j] = hi - lo
        x = x_hat + lows
        return LpSolution(x, float(problem.c @ x), 0)

    rows = np.zeros((m, n + n_slack))
    rhs = np.zeros(m)
    if m_ub:
        rows[:m_ub, :n] = a_ub
        rows[:m_ub, n : n + n_slack] = np.eye(m_ub)
        rhs[:m_ub] = b_ub
    if m_eq:
        rows[m_ub:, :n] = a_eq
        rhs[m_ub:] = b_eq

    # Normalize to rhs >= 0 so the phase-1 start is valid.
    negative = rhs < 0
    rows[negative] *= -1.0
    rhs[negative] *= -1.0

    # Slack columns with coefficient +1 can start basic; other rows need an
    # artificial variable.
    basis = np.full(m, -1, dtype=int)
    needs_artificial = []
    for r in range(m):
        if r < m_ub and not negative[r]:
            basis[r] = n + r
        else:
            needs_artificial.append(r)
    n_art = len(needs_artificial)
    total = n + n_slack + n_art
    tableau = np.zeros((m + 1, total + 1))
    tableau[:m, : n + n_slack] = rows
    tableau[:m, -1] = rhs
    for k, r in enumerate(needs_artificial):
        tableau[r, n + n_slack + k] = 1.0
        basis[r] = n + n_slack + k

    max_iter = 5000 + 50 * (m + total)
    iterations = 0

    if n_art:
        # Phase 1: minimize the sum of artificials.
        cost = np.zeros(total + 1)
        cost[n + n_slack :] = 0.0
        cost[n + n_slack : total] = 1.0
        tableau[-1] = cost
        for r in needs_artificial:
            tableau[-1] -= tableau[r]
        iterations += _bland_iterate(tableau, basis, total, max_iter)
        if tableau[-1, -1] < -1e-7:
            raise LpInfeasibleError(
                f"no feasible point (phase-1 residual {-tableau[-1, -1]:.3e})"
            )
        # Pivot surviving artificials out of the basis; rows that cannot be
        # pivoted are redundant and harmless (artificial stays basic at 0).
        for r in range(m):
            if basis[r] >= n + n_slack:
                pivots = np.nonzero(np.abs(tableau[r, : n + n_slack]) > _PIVOT_TOL)[0]
                if len(pivots):
                    _pivot(tableau, r, int(pivots[0]))
                    basis[r] = int(pivots[0])
        tableau[:, n + n_slack : total] = 0.0

    # Phase 2 with the real costs.
    cost = np.zeros(total + 1)
    cost[:n] = problem.c
    tableau[-1] = cost
    for r in range(m):
        if basis[r] < total and cost[basis[r]] != 0.0:
            tableau[-1] -= cost[basis[r]] * tableau[r]
    iterations += _bland_iterate(tableau, basis, n + n_slack, max_iter)

    x_hat = np.zeros(total)
    for r in range(m):
        x_hat[basis[r]] = tableau[r, -1]
    x = x_hat[:n] + lows
    _check_feasible(problem, x)
    return LpSolution(x, float(problem.c @ x), iterations)


def _check_feasible(problem: LpProblem, x: np.ndarray, tol: float = 1e-7) -> None:
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
    if problem.a_ub.size and np.any(problem.a_ub @ x - problem.b_ub > tol * scale):
        raise RuntimeError("solver returned an infeasible point (inequality violated)")
    if problem.a_eq.size and np.any(np.abs(problem.a_eq @ x - problem.b_eq) > tol * scale):
        raise RuntimeError("solver returned an infeasible point (equality violated)")
    for j, (lo, hi) in enumerate(problem.bounds):
        if x[j] < lo - tol * scale or (hi is not None and x[j] > hi + tol * scale):
            raise RuntimeError(f"solver returned variable {j} outside its bounds")
