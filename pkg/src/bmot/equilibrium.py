"""Insider equilibrium read off a solved transport problem.

States are the atoms (u, v) of nu.  The insider's total order is R = X1 and
the market maker's price is S = X2 for the optimal map X, with pricing rule
f(r) = inf {x2 : (r, x2) in G}, extended by -inf to the left and +inf to the
right of the projection of G.  The insider order is Q = R - U and the
per-state profit Q (V - f(Q + U)) equals -c(X, Y) = -phi_G(U, V).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MonotoneGraph
from .measures import cost

__all__ = [
    "NoMapEquilibrium",
    "PricingRule",
    "EquilibriumOutcome",
    "extract_equilibrium",
    "verify_best_response",
    "verify_efficiency",
    "profit_table",
]


class NoMapEquilibrium(ValueError):
    """The optimal plan splits some atom, so no insider strategy Q(U, V) reproduces it."""


@dataclass(frozen=True)
class PricingRule:
    """Nondecreasing f(r) = lower vertical section of a monotone graph."""

    graph: MonotoneGraph

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.graph.lower_section(r.ravel()).reshape(r.shape)

    @property
    def breakpoints(self):
        """Vertices of G as (r, f(r)) pairs, lowest point first at vertical steps."""
        V = self.graph.vertices
        keep = np.ones(len(V), dtype=bool)
        keep[1:] = V[1:, 0] != V[:-1, 0]
        return V[keep]

    @property
    def domain(self):
        """Projection of G on the first axis, as (lo, hi) with infinite ends allowed."""
        V = self.graph.vertices
        lo = -np.inf if self.graph.left_ray[0] > 0 else float(V[0, 0])
        hi = np.inf if self.graph.right_ray[0] > 0 else float(V[-1, 0])
        return lo, hi


@dataclass
class EquilibriumOutcome:
    pricing_rule: PricingRule
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    s: np.ndarray
    q: np.ndarray
    profit: np.ndarray
    weights: np.ndarray

    @property
    def total_profit(self):
        return float(self.weights @ self.profit)

    def states(self):
        return [
            {"u": float(a), "v": float(b), "r": float(c), "s": float(d), "q": float(e), "profit": float(f)}
            for a, b, c, d, e, f in zip(self.u, self.v, self.r, self.s, self.q, self.profit)
        ]


def _map_of(plan, tol=1e-12):
    """x-atom index per y-atom, or the list of split atoms."""
    J = len(plan.y_atoms)
    owner = np.full(J, -1)
    split = []
    for k, j, m in zip(plan.k, plan.j, plan.mass):
        if m <= tol:
            continue
        if owner[j] == -1:
            owner[j] = k
        elif not np.allclose(plan.x_atoms[owner[j]], plan.x_atoms[k], rtol=0, atol=1e-12):
            split.append(int(j))
    return owner, sorted(set(split))


def extract_equilibrium(report, G=None, profit_tol=1e-8, price_tol=1e-9):
    """Pricing rule and per-state table from a certified solve report.

    Raises NoMapEquilibrium when the plan sends some atom to two distinct
    x-atoms (the three-atom instance is the standard case).
    """
    G = G if G is not None else report.G
    if G is None:
        raise ValueError("no dual set G available")
    if not report.certified:
        failed = [k for k, ok in report.certificate_checks.items() if not ok]
        raise ValueError(f"report is not certified (failed: {', '.join(failed) or 'convergence'})")
    plan = report.plan
    owner, split = _map_of(plan)
    if split:
        raise NoMapEquilibrium(
            f"no map equilibrium at this discretization: the optimal plan splits atoms {split} "
            "between distinct x-atoms, as in the three-point instance whose plan value is below the map value"
        )
    if np.any(owner < 0):
        raise ValueError("plan leaves some atom without mass")
    Y = plan.y_atoms
    X = plan.x_atoms[owner]
    w = plan.y_mass()
    f = PricingRule(G)
    u, v = Y[:, 0], Y[:, 1]
    r, s = X[:, 0], X[:, 1]
    q = r - u
    prof = -cost(X, Y)
    dual_prof = -G.phi(Y)
    dev = float(np.max(np.abs(prof - dual_prof)))
    if dev > profit_tol:
        raise ValueError(f"profit -c(X, Y) differs from -phi_G(Y) by {dev:.3e}")
    price_dev = float(np.max(np.abs(f(r) - s)))
    if price_dev > price_tol * (1 + float(np.max(np.abs(s)))):
        raise ValueError(f"price S differs from f(R) by {price_dev:.3e}")
    return EquilibriumOutcome(f, u, v, r, s, q, prof, w)


def profit_table(outcome, q_grid):
    """q (V - f(q + U)) for every state (rows) and grid order (columns), with 0 * inf = 0."""
    qg = np.asarray(q_grid, dtype=float).ravel()
    price = outcome.pricing_rule(outcome.u[:, None] + qg[None, :])
    with np.errstate(invalid="ignore"):
        val = qg[None, :] * (outcome.v[:, None] - price)
    return np.where(np.isnan(val), 0.0, val)


def verify_best_response(outcome, q_grid, tol=1e-6):
    """No grid order beats the equilibrium profit in any state."""
    table = profit_table(outcome, q_grid)
    return bool(np.all(table.max(axis=1) <= outcome.profit + tol))


def verify_efficiency(outcome, nu=None, group_tol=1e-9):
    """Largest |E[V | R] - S| over groups of states with equal total order."""
    w = outcome.weights if nu is None else nu.weights
    o = np.argsort(outcome.r, kind="stable")
    r = outcome.r[o]
    cut = np.flatnonzero(np.diff(r) > group_tol) + 1
    worst = 0.0
    for g in np.split(np.arange(r.size), cut):
        idx = o[g]
        ev = float(w[idx] @ outcome.v[idx] / w[idx].sum())
        worst = max(worst, float(np.max(np.abs(ev - outcome.s[idx]))))
    return worst
