"""Brute-force solvers for tiny instances, independent of the LP pipeline.

``map_solve_exact`` enumerates every set partition of the atoms: a
Y-measurable martingale X is constant on the blocks of a partition and
equals the block barycentre there.  ``plan_search`` is a heuristic local
search over mass matrices whose x-atoms are the implied row barycentres.
"""

from __future__ import annotations

import numpy as np

from .measures import DiscreteMeasure, Plan, cost

__all__ = ["OracleGuard", "restricted_growth_strings", "map_solve_exact", "map_value", "plan_search"]

MAX_MAP_ATOMS = 10
MAX_PLAN_ATOMS = 6
_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


class OracleGuard(ValueError):
    """Instance too large for an exhaustive or heuristic oracle."""


def restricted_growth_strings(n):
    """All set partitions of range(n) as restricted growth strings, in lexicographic order."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, blocks):
        if i == n:
            yield tuple(a)
            return
        for b in range(blocks + 1):
            a[i] = b
            yield from rec(i + 1, blocks + (b == blocks))

    yield from rec(1, 1)


def map_value(nu, labels):
    """Expected cost of the map sending each block of ``labels`` to its barycentre."""
    labels = np.asarray(labels)
    Y, q = nu.atoms, nu.weights
    val = 0.0
    for b in np.unique(labels):
        sel = labels == b
        bar = q[sel] @ Y[sel] / q[sel].sum()
        val += float(q[sel] @ cost(bar, Y[sel]))
    return val


def map_solve_exact(nu, max_atoms=MAX_MAP_ATOMS):
    """Exact optimal martingale map by partition enumeration.

    Returns ``(X, value, labels)`` where ``X[j]`` is the image of atom j.
    A later partition replaces the incumbent only when it improves by more
    than 1e-12, so ties go to the lexicographically smallest growth string.
    """
    n = len(nu)
    if n > max_atoms:
        raise OracleGuard(f"{n} atoms exceeds the enumeration guard of {max_atoms}")
    Y, q = nu.atoms, nu.weights
    base = float(q @ (Y[:, 0] * Y[:, 1]))
    qy1, qy2 = q * Y[:, 0], q * Y[:, 1]
    # depth-first over growth strings with running block sums; value is
    # sum q y1 y2 - sum_blocks S1 S2 / m
    best = [np.inf, None]
    m = np.zeros(n)
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    lab = [0] * n

    def rec(i, nb):
        if i == n:
            v = base - float(np.sum(s1[:nb] * s2[:nb] / m[:nb]))
            if v < best[0] - 1e-12:
                best[0] = v
                best[1] = tuple(lab)
            return
        for b in range(nb + 1):
            lab[i] = b
            m[b] += q[i]
            s1[b] += qy1[i]
            s2[b] += qy2[i]
            rec(i + 1, nb + 1 if b == nb else nb)
            m[b] -= q[i]
            s1[b] -= qy1[i]
            s2[b] -= qy2[i]
            if b == nb:
                # clear rounding residue of an emptied block
                m[b] = s1[b] = s2[b] = 0.0

    rec(0, 0)
    labels = np.array(best[1])
    X = np.empty_like(Y)
    for b in np.unique(labels):
        sel = labels == b
        X[sel] = q[sel] @ Y[sel] / q[sel].sum()
    # report the value by direct evaluation of the chosen map
    return X, map_value(nu, labels), labels


def _rows_objective(m, s1, s2):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(m > 1e-300, s1 * s2 / np.where(m > 1e-300, m, 1.0), 0.0)


def plan_search(nu, k_max=None, restarts=200, rng_seed=0, sweeps=None, golden_iters=32, max_atoms=MAX_PLAN_ATOMS):
    """Multi-start local search for the plan problem on tiny instances.

    Restarts cycle through k = 1, ..., ``k_max`` rows; each draws a random
    k x n mass matrix with column sums q and improved by pairwise transfers: a
    random column j and rows a, b, with the amount moved from a to b chosen
    by golden-section search on sum_k m_k bar1_k bar2_k.  Restarts run as
    one vectorised batch.  Returns ``(plan, value)`` for the best found.
    """
    n = len(nu)
    if n > max_atoms:
        raise OracleGuard(f"{n} atoms exceeds the plan-search guard of {max_atoms}")
    k_max = n if k_max is None else int(k_max)
    if not 1 <= k_max <= n:
        raise OracleGuard(f"k_max must lie in 1..{n}")
    Y, q = nu.atoms, nu.weights
    base = float(q @ (Y[:, 0] * Y[:, 1]))
    if n == 1:
        return Plan(Y.copy(), Y, [[0, 0, 1.0]]), 0.0
    rng = np.random.default_rng(rng_seed)
    ks = 1 + np.arange(max(int(restarts), k_max)) % k_max
    R = ks.size
    K = k_max
    # random starts: Dirichlet split of every column over the first k rows
    W = rng.gamma(1.0, size=(R, K, n))
    W = np.where(np.arange(K)[None, :, None] < ks[:, None, None], W, 0.0)
    pi = W / W.sum(axis=1, keepdims=True) * q[None, None, :]
    if sweeps is None:
        sweeps = 10 * K * n
    y1, y2 = Y[:, 0], Y[:, 1]
    rows = np.arange(R)
    for _ in range(sweeps):
        a = (rng.random(R) * ks).astype(int)
        b = (rng.random(R) * (ks - 1)).astype(int)
        b = np.where(b >= a, b + 1, b)
        single = ks == 1
        b = np.where(single, a, b)
        j = rng.integers(0, n, R)
        pa, pb = pi[rows, a], pi[rows, b]
        ma, mb = pa.sum(axis=1), pb.sum(axis=1)
        a1, a2 = pa @ y1, pa @ y2
        b1, b2 = pb @ y1, pb @ y2
        yj1, yj2 = y1[j], y2[j]
        lo = -pi[rows, b, j]
        hi = pi[rows, a, j]

        def f(d):
            return _rows_objective(ma - d, a1 - d * yj1, a2 - d * yj2) + _rows_objective(mb + d, b1 + d * yj1, b2 + d * yj2)

        L, H = lo.copy(), hi.copy()
        c = H - _GOLD * (H - L)
        e = L + _GOLD * (H - L)
        fc, fe = f(c), f(e)
        for _ in range(golden_iters):
            left = fc >= fe
            H = np.where(left, e, H)
            L = np.where(left, L, c)
            e_new = np.where(left, c, L + _GOLD * (H - L))
            c_new = np.where(left, H - _GOLD * (H - L), e)
            fe_new = np.where(left, fc, np.nan)
            fc_new = np.where(left, np.nan, fe)
            c, e = c_new, e_new
            redo_c = np.isnan(fc_new)
            redo_e = np.isnan(fe_new)
            fc = np.where(redo_c, f(c), fc_new)
            fe = np.where(redo_e, f(e), fe_new)
        # the bracket midpoint, or an endpoint when emptying a cell is best
        cand = np.stack([0.5 * (L + H), lo, hi, np.zeros(R)])
        vals = np.stack([f(x) for x in cand])
        d = cand[np.argmax(vals, axis=0), rows]
        d = np.where(single, 0.0, d)
        pi[rows, a, j] -= d
        pi[rows, b, j] += d
    np.maximum(pi, 0.0, out=pi)
    m = pi.sum(axis=2)
    S1 = pi @ y1
    S2 = pi @ y2
    obj = _rows_objective(m, S1, S2).sum(axis=1)
    r = int(np.argmax(obj))
    P = pi[r]
    keep = P.sum(axis=1) > 1e-15
    P = P[keep]
    X = (P @ Y) / P.sum(axis=1)[:, None]
    kk, jj = np.nonzero(P > 0)
    plan = Plan(X, Y, np.column_stack([kk, jj, P[kk, jj]]))
    value = float(np.sum(P * cost(X[:, None, :], Y[None, :, :])))
    return plan, value
