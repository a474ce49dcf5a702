"""Dense linear programming.

The default engine is a two-phase tableau simplex.  Dantzig pricing is used
until a streak of degenerate pivots is observed, after which Bland's rule
takes over until the objective moves again.  Large sparse programs can be
routed to HiGHS (through scipy) with ``method="highs"``; ``method="auto"``
picks the dense engine whenever the tableau is small enough.

All programs are stated as maximisation problems::

    maximize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                lb <= x <= ub

Dual multipliers ``y_eq`` and ``y_ub`` are sensitivities of the optimal value
with respect to the right-hand sides, so ``y_ub >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LinearProgram",
    "LpSolution",
    "LpStalled",
    "lp_solve",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# dense engine is used by "auto" while rows * cols stays below this
DENSE_LIMIT = 250_000


class LpStalled(RuntimeError):
    """Raised when the simplex iteration cap is exceeded."""


def _as_matrix(A, n):
    if A is None:
        return sp.csr_matrix((0, n))
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return sp.csr_matrix((0, n))
    return sp.csr_matrix(A)


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_ub: object = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = _as_matrix(self.A_eq, n)
        self.A_ub = _as_matrix(self.A_ub, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        self.lb = np.zeros(n) if self.lb is None else np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()

        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"A_eq has shape {self.A_eq.shape}, expected ({self.b_eq.size}, {n})")
        if self.A_ub.shape != (self.b_ub.size, n):
            raise ValueError(f"A_ub has shape {self.A_ub.shape}, expected ({self.b_ub.size}, {n})")
        for name in ("c", "b_eq", "b_ub"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        for name in ("A_eq", "A_ub"):
            if not np.all(np.isfinite(getattr(self, name).data)):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf) or np.any(self.lb > self.ub):
            raise ValueError("inconsistent variable bounds")

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.b_eq.size + self.b_ub.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    y_eq: np.ndarray | None = None
    y_ub: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    method: str = ""
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def primal_residual(self, lp):
        """Largest violation of any constraint or bound by ``x``."""
        x = self.x
        r = [0.0]
        if lp.b_eq.size:
            r.append(np.max(np.abs(lp.A_eq @ x - lp.b_eq)))
        if lp.b_ub.size:
            r.append(np.max(lp.A_ub @ x - lp.b_ub))
        r.append(np.max(lp.lb - x))
        r.append(np.max(x - lp.ub))
        return max(0.0, *r)

    def dual_objective(self, lp):
        """b @ y plus the bound terms d @ x; equals the primal value at optimum."""
        return float(lp.b_eq @ self.y_eq + lp.b_ub @ self.y_ub + self.reduced_costs @ self.x)

    def complementarity_residual(self, lp):
        r = 0.0
        if lp.b_ub.size:
            slack = lp.b_ub - lp.A_ub @ self.x
            r = max(r, float(np.max(np.abs(self.y_ub * slack))))
        d = self.reduced_costs
        # a reduced cost may be nonzero only at the bound it pushes against
        with np.errstate(invalid="ignore"):
            gap = np.where(d < 0, self.x - lp.lb, np.where(d > 0, lp.ub - self.x, 0.0))
        viol = np.where(np.isfinite(gap), np.abs(d) * gap, np.abs(d))
        if viol.size:
            r = max(r, float(np.max(viol)))
        return r


# --------------------------------------------------------------------------
# dense two-phase tableau simplex
# --------------------------------------------------------------------------


class _Tableau:
    """Tableau for ``min c @ x, A @ x = b, x >= 0`` with ``b >= 0``."""

    def __init__(self, A, b, max_iter, degenerate_streak, tol):
        m, n = A.shape
        self.m, self.n = m, n
        self.tol = tol
        self.piv_tol = 1e-9
        self.max_iter = max_iter
        self.streak_limit = degenerate_streak
        self.iterations = 0
        # columns: n structural, m artificial, then rhs
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n] = A
        T[:m, n : n + m] = np.eye(m)
        T[:m, -1] = b
        self.T = T
        self.basis = np.arange(n, n + m)
        self.active_rows = np.arange(m)

    def _pivot(self, p, q):
        T = self.T
        T[p] /= T[p, q]
        col = T[:, q].copy()
        col[p] = 0.0
        T -= np.outer(col, T[p])
        self.basis[p] = q
        self.iterations += 1

    def _iterate(self, allowed):
        """Pivot until the objective row (last row) has no negative reduced cost."""
        T = self.T
        m = T.shape[0] - 1
        bland = False
        streak = 0
        while True:
            if self.iterations >= self.max_iter:
                raise LpStalled(f"simplex exceeded {self.max_iter} pivots")
            r = T[m, :-1]
            cand = np.flatnonzero((r < -self.tol) & allowed)
            if cand.size == 0:
                return OPTIMAL
            q = cand[0] if bland else cand[np.argmin(r[cand])]
            colq = T[:m, q]
            rows = np.flatnonzero(colq > self.piv_tol)
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / colq[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            if bland:
                p = ties[np.argmin(self.basis[ties])]
            else:
                p = ties[np.argmax(colq[ties])]
            if best <= 1e-12:
                streak += 1
                if streak >= self.streak_limit:
                    bland = True
            else:
                streak = 0
                bland = False
            self._pivot(p, q)

    def solve(self, c):
        m, n = self.m, self.n
        T = self.T
        # phase 1: minimise the sum of artificials
        T[m, :n] = -T[:m, :n].sum(axis=0)
        T[m, n : n + m] = 0.0
        T[m, -1] = -T[:m, -1].sum()
        allowed = np.ones(n + m, dtype=bool)
        self._iterate(allowed)
        scale = 1.0 + np.max(np.abs(T[:m, -1]), initial=0.0)
        if -T[m, -1] > 1e-9 * scale:
            return INFEASIBLE

        # drive artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for p in range(m):
            if self.basis[p] >= n:
                row = T[p, :n]
                js = np.flatnonzero(np.abs(row) > self.piv_tol)
                if js.size:
                    self._pivot(p, js[np.argmax(np.abs(row[js]))])
                else:
                    keep[p] = False
        rows = np.flatnonzero(keep)
        self.T = T = np.vstack([T[rows][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
        self.basis = self.basis[rows]
        self.active_rows = rows
        m2 = rows.size

        # phase 2
        cB = c[self.basis]
        T[m2, :n] = c - cB @ T[:m2, :n]
        T[m2, -1] = -cB @ T[:m2, -1]
        return self._iterate(np.ones(n, dtype=bool))


def _standardize(lp):
    """Rewrite ``lp`` as ``min ct @ z, At @ z = bt, z >= 0``.

    Returns the pieces plus the affine map ``x = offset + P @ z``.
    """
    n = lp.n_vars
    lb, ub = lp.lb, lp.ub
    cols = []  # (original index, sign)
    offset = np.zeros(n)
    ub_rows = []  # (z index, bound width)
    for j in range(n):
        if np.isfinite(lb[j]):
            offset[j] = lb[j]
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                ub_rows.append((len(cols) - 1, ub[j] - lb[j]))
        elif np.isfinite(ub[j]):
            offset[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    P = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        P[j, k] = s

    A_eq = lp.A_eq.toarray()
    A_ub = lp.A_ub.toarray()
    me, mu, mb = A_eq.shape[0], A_ub.shape[0], len(ub_rows)
    n_slack = mu + mb
    At = np.zeros((me + mu + mb, nz + n_slack))
    bt = np.zeros(me + mu + mb)
    At[:me, :nz] = A_eq @ P
    bt[:me] = lp.b_eq - A_eq @ offset
    At[me : me + mu, :nz] = A_ub @ P
    bt[me : me + mu] = lp.b_ub - A_ub @ offset
    for r, (k, w) in enumerate(ub_rows):
        At[me + mu + r, k] = 1.0
        bt[me + mu + r] = w
    At[me:, nz:] = np.eye(n_slack)
    ct = np.zeros(nz + n_slack)
    ct[:nz] = -(lp.c @ P)
    sign = np.where(bt < 0, -1.0, 1.0)
    At *= sign[:, None]
    bt *= sign
    return At, bt, ct, P, offset, sign, (me, mu, mb), nz


def _solve_dense(lp, max_iter, degenerate_streak, tol):
    At, bt, ct, P, offset, sign, (me, mu, mb), nz = _standardize(lp)
    m, N = At.shape
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    tab = _Tableau(At, bt, max_iter, degenerate_streak, tol)
    status = tab.solve(ct)
    if status != OPTIMAL:
        return LpSolution(status=status, iterations=tab.iterations, method="simplex")

    # recompute the vertex and duals from the final basis for accuracy
    rows = tab.active_rows
    basis = tab.basis
    B = At[np.ix_(rows, basis)]
    z = np.zeros(N)
    y_std = np.zeros(m)
    try:
        z[basis] = np.linalg.solve(B, bt[rows])
        y_std[rows] = np.linalg.solve(B.T, ct[basis])
    except np.linalg.LinAlgError:
        # numerically dependent rows survived phase one: least squares on the
        # basis, and HiGHS when that does not reproduce the vertex
        z[basis] = np.linalg.lstsq(B, bt[rows], rcond=None)[0]
        y_std[rows] = np.linalg.lstsq(B.T, ct[basis], rcond=None)[0]
        if np.max(np.abs(At @ np.maximum(z, 0.0) - bt), initial=0.0) > 1e-9 * (1 + np.max(np.abs(bt), initial=0.0)):
            return _solve_highs(lp, tol)
    z = np.maximum(z, 0.0)
    # undo the row flips; max problem duals are minus the min problem duals
    y = -(y_std * sign)
    x = offset + P @ z[:nz]
    x = np.clip(x, lp.lb, lp.ub)
    y_eq = y[:me]
    y_ub = np.maximum(y[me : me + mu], 0.0)
    d = lp.c - lp.A_eq.T @ y_eq - lp.A_ub.T @ y_ub
    d = np.where(np.abs(d) < 1e-11, 0.0, d)
    return LpSolution(
        status=OPTIMAL,
        x=x,
        objective=float(lp.c @ x),
        y_eq=y_eq,
        y_ub=y_ub,
        reduced_costs=d,
        iterations=tab.iterations,
        method="simplex",
        basis=basis.copy(),
    )


def _solve_highs(lp, tol):
    from scipy.optimize import linprog

    res = linprog(
        -lp.c,
        A_ub=lp.A_ub if lp.b_ub.size else None,
        b_ub=lp.b_ub if lp.b_ub.size else None,
        A_eq=lp.A_eq if lp.b_eq.size else None,
        b_eq=lp.b_eq if lp.b_eq.size else None,
        bounds=np.column_stack([lp.lb, lp.ub]),
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": min(1e-10, tol),
            "dual_feasibility_tolerance": min(1e-10, tol),
            "presolve": True,
        },
    )
    if res.status == 2:
        # presolve reports "infeasible or unbounded" as infeasible
        if np.any(lp.c):
            probe = _solve_highs(LinearProgram(np.zeros_like(lp.c), lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.lb, lp.ub), tol)
            if probe.optimal:
                return LpSolution(status=UNBOUNDED, method="highs")
        return LpSolution(status=INFEASIBLE, method="highs")
    if res.status == 3:
        return LpSolution(status=UNBOUNDED, method="highs")
    if res.status == 1:
        raise LpStalled(f"HiGHS iteration limit: {res.message}")
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    x = np.clip(res.x, lp.lb, lp.ub)
    y_eq = -res.eqlin.marginals if lp.b_eq.size else np.zeros(0)
    y_ub = np.maximum(-res.ineqlin.marginals, 0.0) if lp.b_ub.size else np.zeros(0)
    d = lp.c - lp.A_eq.T @ y_eq - lp.A_ub.T @ y_ub
    d = np.where(np.abs(d) < 1e-11, 0.0, d)
    return LpSolution(
        status=OPTIMAL,
        x=x,
        objective=float(lp.c @ x),
        y_eq=y_eq,
        y_ub=y_ub,
        reduced_costs=d,
        iterations=int(getattr(res, "nit", 0)),
        method="highs",
    )


def lp_solve(lp, method="auto", max_iter=None, degenerate_streak=25, tol=1e-10):
    """Solve ``lp`` and return an :class:`LpSolution`.

    ``method`` is ``"simplex"`` (dense tableau), ``"highs"`` or ``"auto"``.
    Raises :class:`LpStalled` when the pivot cap is hit; a stalled solve never
    returns a partial answer.
    """
    if method == "auto":
        width = lp.n_vars + lp.b_ub.size + int(np.sum(np.isfinite(lp.lb) & np.isfinite(lp.ub)))
        method = "simplex" if (lp.n_rows + 1) * (width + lp.n_rows + 1) <= DENSE_LIMIT else "highs"
    if method == "simplex":
        return _solve_dense(lp, max_iter, degenerate_streak, tol)
    if method == "highs":
        return _solve_highs(lp, tol)
    raise ValueError(f"unknown LP method {method!r}")
