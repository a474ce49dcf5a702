"""Discrete measures on the plane, martingale plans and the covariance cost."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import norm

from .lp import LinearProgram, lp_solve

__all__ = [
    "DiscreteMeasure",
    "Plan",
    "PlanInvalid",
    "cost",
    "plan_value",
    "plan_value_forms",
    "convex_order_feasible",
    "discretize_gaussian",
]

WEIGHT_TOL = 1e-12
# accepted drift of the raw weight sum before renormalisation
INPUT_WEIGHT_TOL = 1e-9
MARTINGALE_TOL = 1e-8


class PlanInvalid(ValueError):
    """A plan fails one of its structural invariants."""


def cost(x, y):
    """Covariance cost (x1 - y1)(x2 - y2); broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x[..., 0] - y[..., 0]) * (x[..., 1] - y[..., 1])


def _as_points(a, name):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return a.reshape(0, 2)
    a = np.atleast_2d(a)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"{name} must be a list of points in the plane, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite coordinates")
    return a


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on the plane.

    Exact duplicate atoms are merged (weights summed), keeping the order of
    first occurrence.  Weights must be positive and sum to one up to
    ``INPUT_WEIGHT_TOL``; they are then renormalised when the sum is off by
    more than 1e-12, so the stored sum is one to rounding.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = _as_points(self.atoms, "atoms")
        w = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] == 0:
            raise ValueError("a measure needs at least one atom")
        if w.size != atoms.shape[0]:
            raise ValueError(f"{atoms.shape[0]} atoms but {w.size} weights")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        s = w.sum()
        if abs(s - 1.0) > INPUT_WEIGHT_TOL:
            raise ValueError(f"weights sum to {s!r}, not 1")

        uniq, first, inv = np.unique(atoms, axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        if uniq.shape[0] < atoms.shape[0]:
            merged = np.zeros(uniq.shape[0])
            np.add.at(merged, inv, w)
            order = np.argsort(first)
            atoms, w = uniq[order], merged[order]
        # only renormalise beyond rounding, so parsing stored weights is idempotent
        if abs(w.sum() - 1.0) > 1e-12:
            w = w / w.sum()
        object.__setattr__(self, "atoms", _readonly(atoms))
        object.__setattr__(self, "weights", _readonly(w))

    def __len__(self):
        return self.atoms.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.weights, other.weights)

    __hash__ = None

    @classmethod
    def uniform(cls, atoms):
        atoms = _as_points(atoms, "atoms")
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    @classmethod
    def dirac(cls, point):
        return cls(np.asarray(point, dtype=float).reshape(1, 2), [1.0])

    @property
    def mean(self):
        return self.weights @ self.atoms

    def moment(self, p1, p2):
        """E[Y1**p1 * Y2**p2]."""
        return float(self.weights @ (self.atoms[:, 0] ** p1 * self.atoms[:, 1] ** p2))

    @property
    def covariance(self):
        d = self.atoms - self.mean
        return (d * self.weights[:, None]).T @ d

    def e_y1y2(self):
        return self.moment(1, 1)

    def permuted(self, perm):
        perm = np.asarray(perm)
        return DiscreteMeasure(self.atoms[perm], self.weights[perm])


@dataclass(frozen=True, eq=False)
class Plan:
    """Coupling of x-atoms and y-atoms given as (k, j, mass) entries.

    Repeated (k, j) entries are summed.  Masses must be positive.
    """

    x_atoms: np.ndarray
    y_atoms: np.ndarray
    entries: np.ndarray = field(default=None)

    def __post_init__(self):
        X = _as_points(self.x_atoms, "x_atoms")
        Y = _as_points(self.y_atoms, "y_atoms")
        e = np.asarray(self.entries if self.entries is not None else np.zeros((0, 3)), dtype=float)
        e = e.reshape(-1, 3)
        k, j, m = e[:, 0], e[:, 1], e[:, 2]
        if np.any(k != np.round(k)) or np.any(j != np.round(j)):
            raise PlanInvalid("entry indices must be integers")
        k, j = k.astype(int), j.astype(int)
        if np.any((k < 0) | (k >= len(X))) or np.any((j < 0) | (j >= len(Y))):
            raise PlanInvalid("entry index out of range")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise PlanInvalid("entry masses must be finite and strictly positive")
        # merge repeated pairs, sorted by (k, j)
        key = k * max(len(Y), 1) + j
        uk, inv = np.unique(key, return_inverse=True)
        mass = np.zeros(uk.size)
        np.add.at(mass, inv.ravel(), m)
        kk, jj = np.divmod(uk, max(len(Y), 1))
        ent = np.column_stack([kk, jj, mass]) if uk.size else np.zeros((0, 3))
        object.__setattr__(self, "x_atoms", _readonly(X))
        object.__setattr__(self, "y_atoms", _readonly(Y))
        object.__setattr__(self, "entries", _readonly(ent))

    def __eq__(self, other):
        if not isinstance(other, Plan):
            return NotImplemented
        return (
            np.array_equal(self.x_atoms, other.x_atoms)
            and np.array_equal(self.y_atoms, other.y_atoms)
            and np.array_equal(self.entries, other.entries)
        )

    __hash__ = None

    @classmethod
    def from_matrix(cls, x_atoms, y_atoms, P, prune=1e-12):
        """Plan from a dense mass matrix ``P[k, j]``; x-atoms without mass are dropped."""
        P = np.asarray(P, dtype=float)
        X = _as_points(x_atoms, "x_atoms")
        keep = np.flatnonzero(P.max(axis=1, initial=0.0) > prune)
        P = P[keep]
        k, j = np.nonzero(P > prune)
        return cls(X[keep], y_atoms, np.column_stack([k, j, P[k, j]]))

    @classmethod
    def identity(cls, nu):
        n = len(nu)
        return cls(nu.atoms, nu.atoms, np.column_stack([np.arange(n), np.arange(n), nu.weights]))

    @property
    def k(self):
        return self.entries[:, 0].astype(int)

    @property
    def j(self):
        return self.entries[:, 1].astype(int)

    @property
    def mass(self):
        return self.entries[:, 2]

    @property
    def total_mass(self):
        return float(self.mass.sum())

    def matrix(self):
        P = np.zeros((len(self.x_atoms), len(self.y_atoms)))
        np.add.at(P, (self.k, self.j), self.mass)
        return P

    def x_mass(self):
        out = np.zeros(len(self.x_atoms))
        np.add.at(out, self.k, self.mass)
        return out

    def y_mass(self):
        out = np.zeros(len(self.y_atoms))
        np.add.at(out, self.j, self.mass)
        return out

    def x_marginal(self):
        m = self.x_mass()
        keep = m > 0
        return DiscreteMeasure(self.x_atoms[keep], m[keep] / m[keep].sum())

    def support_pairs(self):
        """Arrays (x, y, mass) over the entries."""
        return self.x_atoms[self.k], self.y_atoms[self.j], self.mass

    def martingale_residuals(self):
        """Per x-atom norm of sum_j mass_kj (y_j - x_k), and the x-masses."""
        x, y, m = self.support_pairs()
        d = np.zeros((len(self.x_atoms), 2))
        np.add.at(d, self.k, m[:, None] * (y - x))
        return np.linalg.norm(d, axis=1), self.x_mass()

    def martingale_ok(self, tol=MARTINGALE_TOL):
        r, m = self.martingale_residuals()
        return bool(np.all(r <= tol * np.maximum(m, 0.0) + 1e-300))

    def check(self, nu=None, tol=MARTINGALE_TOL, marginal_tol=1e-10):
        """Return a list of failed invariants (empty when the plan is valid)."""
        problems = []
        if abs(self.total_mass - 1.0) > WEIGHT_TOL * max(1, len(self.entries)):
            problems.append(f"total mass {self.total_mass!r} differs from 1")
        if nu is not None:
            if len(nu) != len(self.y_atoms) or not np.allclose(nu.atoms, self.y_atoms, rtol=0, atol=1e-12):
                problems.append("y_atoms do not match the target measure")
            else:
                dev = np.abs(self.y_mass() - nu.weights)
                if np.any(dev > marginal_tol):
                    problems.append(f"y-marginal off by {dev.max():.3e} at atom {int(dev.argmax())}")
        r, m = self.martingale_residuals()
        bad = np.flatnonzero(r > tol * m + 1e-300)
        if bad.size:
            k = int(bad[np.argmax(r[bad] / np.maximum(m[bad], 1e-300))])
            problems.append(f"martingale residual {r[k]:.3e} at x-atom {k} (mass {m[k]:.3e})")
        return problems

    def validate(self, nu=None, tol=MARTINGALE_TOL):
        problems = self.check(nu, tol)
        if problems:
            raise PlanInvalid("; ".join(problems))
        return self


def plan_value_forms(plan):
    """(sum mass * c(x, y), E[y1 y2] - E[x1 x2])."""
    x, y, m = plan.support_pairs()
    direct = float(m @ cost(x, y))
    identity = float(m @ (y[:, 0] * y[:, 1]) - m @ (x[:, 0] * x[:, 1]))
    return direct, identity


def plan_value(plan, nu=None, tol=MARTINGALE_TOL, agree=1e-8):
    """Expected cost of ``plan``, cross-checked against E[y1 y2] - E[x1 x2]."""
    plan.validate(nu, tol)
    direct, identity = plan_value_forms(plan)
    if abs(direct - identity) > agree:
        raise PlanInvalid(f"cost forms disagree: {direct!r} vs {identity!r}")
    return direct


def convex_order_feasible(mu, nu, tol=MARTINGALE_TOL, method="auto"):
    """Is there a martingale coupling of ``mu`` (x) and ``nu`` (y)?

    The martingale condition is relaxed to |sum_j pi_kj (y_j - x_k)| <= tol * mu_k / 2
    per coordinate, so feasibility is monotone in ``tol`` and the witness
    passes the Euclidean residual check of :meth:`Plan.check` at ``tol``.  Returns
    ``(feasible, witness_plan_or_None)``.
    """
    X, Y = mu.atoms, nu.atoms
    K, J = len(X), len(Y)
    nv = K * J
    idx = np.arange(nv).reshape(K, J)
    rows, cols, vals = [], [], []
    # row sums then column sums
    for k in range(K):
        rows += [k] * J
        cols += list(idx[k])
        vals += [1.0] * J
    for j in range(J):
        rows += [K + j] * K
        cols += list(idx[:, j])
        vals += [1.0] * K
    A_eq = sp.csr_matrix((vals, (rows, cols)), shape=(K + J, nv))
    b_eq = np.concatenate([mu.weights, nu.weights])
    blocks = []
    b_ub = []
    for k in range(K):
        for a in range(2):
            row = np.zeros(nv)
            row[idx[k]] = Y[:, a] - X[k, a]
            blocks += [row, -row]
            b_ub += [0.5 * tol * mu.weights[k]] * 2
    lp = LinearProgram(np.zeros(nv), A_eq, b_eq, np.array(blocks), np.array(b_ub))
    sol = lp_solve(lp, method=method)
    if not sol.optimal:
        return False, None
    P = np.maximum(sol.x.reshape(K, J), 0.0)
    return True, Plan.from_matrix(X, Y, P, prune=0.0)


def discretize_gaussian(sigma1, sigma2, rho, n_per_axis):
    """Tensor mid-quantile grid for the centred Gaussian with the given moments.

    Per-axis points are the standard normal quantiles at (i + 1/2)/n,
    symmetrised and rescaled to unit empirical variance, so that the
    discrete law has exactly the requested covariance.  The grid is then
    correlated by the Cholesky factor of the correlation matrix.
    """
    if not (sigma1 > 0 and sigma2 > 0):
        raise ValueError("standard deviations must be positive")
    if not -1 < rho < 1:
        raise ValueError("correlation must lie in (-1, 1)")
    n = int(n_per_axis)
    if n < 2:
        raise ValueError("need at least 2 points per axis")
    z = norm.ppf((np.arange(n) + 0.5) / n)
    z = 0.5 * (z - z[::-1])
    z /= np.sqrt(np.mean(z * z))
    g1, g2 = np.meshgrid(z, z, indexing="ij")
    g1, g2 = g1.ravel(), g2.ravel()
    y1 = sigma1 * g1
    y2 = sigma2 * (rho * g1 + np.sqrt(1.0 - rho * rho) * g2)
    atoms = np.column_stack([y1, y2])
    return DiscreteMeasure(atoms, np.full(n * n, 1.0 / (n * n)))
