"""Analytic solutions and exact fixtures.

* the elliptical (Gaussian) case, where the optimal map is linear and G is
  the line x2 = lambda x1 with lambda = sigma2 / sigma1;
* the three-atom instance whose optimal plan splits an atom, so the optimal
  map value -1/3 is strictly above the plan value -4/9;
* two-state constructions with V = +-1 where X is the midpoint of two atoms
  on a two-line G;
* the antidiagonal pair, whose optimal plan sends everything to the mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MonotoneGraph
from .measures import DiscreteMeasure, Plan

__all__ = [
    "EllipticalSpec",
    "elliptical_solution",
    "elliptical_map",
    "fixture_example1",
    "fixture_example2",
    "fixture_example3",
    "fixture_remark3",
    "hyperbola_graph",
    "FIXTURES",
]


@dataclass(frozen=True)
class EllipticalSpec:
    sigma1: float
    sigma2: float
    cov12: float = 0.0

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0) or not np.isfinite(self.sigma1 * self.sigma2):
            raise ValueError("standard deviations must be positive and finite")
        if abs(self.cov12) > self.sigma1 * self.sigma2 * (1 + 1e-12):
            raise ValueError(f"|cov12| = {abs(self.cov12)} exceeds sigma1 * sigma2")

    @property
    def rho(self):
        return self.cov12 / (self.sigma1 * self.sigma2)


def elliptical_solution(spec):
    """``(lambda, map_coeffs, G, value)`` for a centred elliptical Y.

    X = A Y with A = [[1/2, 1/(2 lambda)], [lambda/2, 1/2]], G the line
    x2 = lambda x1, and E c(X, Y) = cov12 / 2 - sigma1 sigma2 / 2.
    """
    lam = spec.sigma2 / spec.sigma1
    A = np.array([[0.5, 0.5 / lam], [0.5 * lam, 0.5]])
    G = MonotoneGraph.line(lam)
    value = 0.5 * spec.cov12 - 0.5 * spec.sigma1 * spec.sigma2
    return lam, A, G, value


def elliptical_map(spec, Y):
    """The linear map applied to points ``Y`` (rows)."""
    _, A, _, _ = elliptical_solution(spec)
    return np.asarray(Y, dtype=float) @ A.T


def fixture_example1(n=40, spec=None):
    """Discretised Gaussian with the linear-map plan (a feasible martingale plan only approximately).

    Returns ``(nu, spec, G, value)``; ``value`` is the continuous optimum.
    """
    from .measures import discretize_gaussian

    spec = spec or EllipticalSpec(1.0, 1.0, 0.0)
    nu = discretize_gaussian(spec.sigma1, spec.sigma2, spec.rho, n)
    lam, _, G, value = elliptical_solution(spec)
    return nu, spec, G, value


def hyperbola_graph(y, level, s_min=1e-3, s_max=1e3, touch=(), n=120):
    """Tangent polyline of the increasing branch {c(x, y) = level, x1 > y1}.

    Vertices are intersections of consecutive tangent lines, so the polyline
    lies above the concave branch; it touches it exactly at the tangency
    abscissae x1 = y1 + s for s in a geometric grid joined with ``touch``
    (offsets from y1).  The end rays follow the extreme tangents.
    """
    y = np.asarray(y, dtype=float)
    a = -float(level)
    if a <= 0:
        raise ValueError("level must be negative")
    s = np.unique(np.concatenate([np.geomspace(s_min, s_max, n), np.asarray(touch, dtype=float)]))
    t1 = y[0] + s
    t2 = y[1] - a / s
    m = a / s**2
    # consecutive tangents a_i: x2 = t2_i + m_i (x1 - t1_i)
    x1 = (t2[1:] - t2[:-1] + m[:-1] * t1[:-1] - m[1:] * t1[1:]) / (m[:-1] - m[1:])
    x2 = t2[:-1] + m[:-1] * (x1 - t1[:-1])
    V = np.column_stack([x1, x2])
    # tangency points sit inside consecutive corners; include them as vertices
    T = np.column_stack([t1, t2])
    P = np.empty((2 * len(s) - 1, 2))
    P[0::2] = T
    P[1::2] = V
    left = np.array([1.0, m[0]])
    right = np.array([1.0, m[-1]])
    return MonotoneGraph(P, left, right)


def fixture_example2():
    """Three atoms (-1, 1), (0, -1), (1, 0) with weight 1/3.

    Returns ``(nu, plan, phi, G, plan_value, map_value)`` with
    phi = (-8/9, -2/9, -2/9), G the branch {c(x, y0) = -8/9, x1 > -1}
    (as a tangent polyline through both x-atoms), plan value -4/9 and map
    value -1/3.
    """
    nu = DiscreteMeasure([[-1.0, 1.0], [0.0, -1.0], [1.0, 0.0]], np.full(3, 1.0 / 3.0))
    z1 = np.array([-1.0, -1.0]) / 3.0
    z2 = np.array([1.0, 1.0]) / 3.0
    plan = Plan(
        [z1, z2],
        nu.atoms,
        [[0, 1, 1.0 / 3.0], [0, 0, 1.0 / 6.0], [1, 2, 1.0 / 3.0], [1, 0, 1.0 / 6.0]],
    )
    phi = np.array([-8.0 / 9.0, -2.0 / 9.0, -2.0 / 9.0])
    G = hyperbola_graph(nu.atoms[0], -8.0 / 9.0, touch=(z1[0] + 1.0, z2[0] + 1.0))
    return nu, plan, phi, G, -4.0 / 9.0, -1.0 / 3.0


def example3_atoms(u, v):
    """Atom of the two-state construction for a state (u, v), v in {-1, 1}."""
    if u < 0:
        return np.array([u / 3.0 * (1 - 2 * v), u * (1 + 2 * v)])
    return np.array([u * (1 + 2 * v), u / 3.0 * (1 - 2 * v)])


def example3_x(u):
    return np.array([u / 3.0, u]) if u < 0 else np.array([u, u / 3.0])


def fixture_example3(u_atoms):
    """U uniform on symmetric nonzero ``u_atoms``, V uniform on {-1, 1}.

    Returns ``(nu, plan, G, value)``: X = (U/3, U) for U < 0 and (U, U/3)
    otherwise, the two-line G, and value -(4/3) E[U^2].
    """
    u = np.sort(np.asarray(u_atoms, dtype=float).ravel())
    if u.size == 0 or np.any(u == 0):
        raise ValueError("u atoms must be nonzero")
    if len(np.unique(u)) != len(u):
        raise ValueError("u atoms must be distinct")
    if not np.allclose(np.sort(-u), u, rtol=0, atol=1e-12):
        raise ValueError("u atoms must be symmetric about 0")
    w = 1.0 / (2 * len(u))
    atoms, weights, X, entries = [], [], [], []
    for k, uk in enumerate(u):
        X.append(example3_x(uk))
        for v in (-1, 1):
            atoms.append(example3_atoms(uk, v))
            weights.append(w)
            entries.append([k, len(atoms) - 1, w])
    nu = DiscreteMeasure(atoms, weights)
    # atoms of different states never coincide for distinct |u|, but map by value to be safe
    Y = np.array(atoms)
    idx = [int(np.flatnonzero(np.all(nu.atoms == y, axis=1))[0]) for y in Y]
    plan = Plan(X, nu.atoms, [[k, idx[j], m] for k, j, m in entries])
    G = MonotoneGraph([[0.0, 0.0]], [1.0, 3.0], [3.0, 1.0])
    value = -4.0 / 3.0 * float(np.mean(u**2))
    return nu, plan, G, value


def fixture_remark3(a=1.0):
    """Two antidiagonal atoms +-(a, -a): the optimal plan sends both to the mean.

    Returns ``(nu, plan, G, value)`` with G the diagonal and value -a^2.
    """
    nu = DiscreteMeasure([[-a, a], [a, -a]], [0.5, 0.5])
    plan = Plan([[0.0, 0.0]], nu.atoms, [[0, 0, 0.5], [0, 1, 0.5]])
    return nu, plan, MonotoneGraph.identity(), -a * a


FIXTURES = ("example1", "example2", "example3", "remark3")
