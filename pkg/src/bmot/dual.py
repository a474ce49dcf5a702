"""Finite dual: maximise sum_j q_j phi_j over pairwise-admissible potentials.

For atoms y_i, y_j with c_ij = c(y_i, y_j) < 0 the pairwise condition

    (1 - t) phi_i + t phi_j <= t (1 - t) c_ij    for all t in [0, 1]

is equivalent to sqrt(-phi_i) + sqrt(-phi_j) >= sqrt(-c_ij).  Pairs with
c_ij >= 0 never bind.  The condition is convex in phi; each fixed t gives a
linear cut, which is what the cutting-plane LP uses.  In the variables
u = sqrt(-phi) the problem is the QP

    minimise sum_j q_j u_j^2  subject to  u_i + u_j >= s_ij,  u >= 0,

which is used to polish the LP answer: once the active pairs are known the
optimum solves a linear system exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls
import cvxopt
from cvxopt import solvers as _cvx
from scipy.sparse.csgraph import connected_components

from .geometry import (
    MonotoneGraph,
    _piece_minima,
    _quad_max,
    argmin_set,
    build_envelope,
    check_admissible,
)
from .lp import LinearProgram, lp_solve
from .measures import DiscreteMeasure, cost

__all__ = [
    "PotentialValues",
    "DualConfig",
    "NotConverged",
    "RecoveryError",
    "dual_solve",
    "pair_data",
    "tangency_points",
    "recover_G",
    "tangency_candidates",
]

log = logging.getLogger(__name__)


class NotConverged(RuntimeError):
    def __init__(self, msg, bound=None, phi=None):
        super().__init__(msg)
        self.bound = bound
        self.phi = phi


class RecoveryError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report or []


@dataclass
class PotentialValues:
    phi: np.ndarray
    active_constraints: list = field(default_factory=list)
    admissible: bool = True
    bound: float = float("nan")

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).ravel()

    def __len__(self):
        return self.phi.size


@dataclass
class DualConfig:
    tol: float = 1e-9
    max_rounds: int | None = None
    cuts_per_atom: int = 3
    seed_slack: float = 0.05
    polish: bool = True
    method: str = "auto"
    qp_engine: str = "ipm"
    # try constraint generation on the QP before any cut LP round
    polish_first: bool = True


@dataclass
class _Pairs:
    i: np.ndarray
    j: np.ndarray
    c: np.ndarray
    s: np.ndarray


def pair_data(nu):
    """All unordered atom pairs with negative cost, with s = sqrt(-c)."""
    Y = nu.atoms
    C = cost(Y[:, None, :], Y[None, :, :])
    i, j = np.nonzero(np.triu(C < 0, 1))
    c = C[i, j]
    return _Pairs(i, j, c, np.sqrt(-c))


def _u(phi):
    return np.sqrt(np.maximum(-np.asarray(phi, dtype=float), 0.0))


def _seed_phi(nu):
    """Potentials of a reference line through the mean: a feasible start."""
    cov = nu.covariance
    s1, s2 = np.sqrt(max(cov[0, 0], 0.0)), np.sqrt(max(cov[1, 1], 0.0))
    if s1 > 0 and s2 > 0:
        G0 = MonotoneGraph.line(s2 / s1, nu.mean)
    elif s1 == 0:
        G0 = MonotoneGraph.line(np.inf, nu.mean)
    else:
        G0 = MonotoneGraph.line(0.0, nu.mean)
    return G0.phi(nu.atoms)


class _CutLP:
    """Cut pool for the maximisation of q @ phi with phi <= 0."""

    def __init__(self, nu, method):
        self.q = nu.weights
        self.n = len(nu)
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []
        self.meta = []  # (i, j, t)
        self.keys = set()
        self.method = method

    def add(self, i, j, t, c):
        added = 0
        for a, b, tt, cc in zip(i, j, t, c):
            key = (int(a), int(b), round(float(tt), 12))
            if key in self.keys:
                continue
            self.keys.add(key)
            r = len(self.rhs)
            self.rows += [r, r]
            self.cols += [int(a), int(b)]
            self.vals += [1.0 - tt, tt]
            self.rhs.append(tt * (1.0 - tt) * cc)
            self.meta.append((int(a), int(b), float(tt)))
            added += 1
        return added

    def solve(self):
        m = len(self.rhs)
        A = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(m, self.n)) if m else None
        lp = LinearProgram(self.q, A_ub=A, b_ub=np.array(self.rhs) if m else None, lb=-np.inf, ub=0.0)
        sol = lp_solve(lp, method=self.method)
        if not sol.optimal:
            raise RuntimeError(f"cut LP {sol.status}")
        return sol


def _separate(phi, pairs, tol, per_atom):
    """Most violated cut (at the stationary t) for every violated pair, capped per atom."""
    h, t = _quad_max(phi[pairs.i], phi[pairs.j], pairs.c)
    bad = np.flatnonzero(h > tol)
    if bad.size == 0:
        return bad, t, h
    # keep the worst few per atom, counting both endpoints
    order = bad[np.argsort(-h[bad], kind="stable")]
    count = {}
    keep = []
    for k in order:
        a, b = pairs.i[k], pairs.j[k]
        if count.get(a, 0) < per_atom or count.get(b, 0) < per_atom:
            keep.append(k)
            count[a] = count.get(a, 0) + 1
            count[b] = count.get(b, 0) + 1
    return np.array(keep, dtype=int), t, h


def _tangent_t(ui, uj):
    tot = ui + uj
    return np.where(tot > 0, ui / np.where(tot > 0, tot, 1.0), 0.5)


def _max_violation(u, pairs):
    if pairs.i.size == 0:
        return 0.0
    return float(np.max(pairs.s - u[pairs.i] - u[pairs.j], initial=-np.inf))


def _restricted_qp(n, q, pairs, cand, engine="ipm"):
    """Minimiser of sum q u^2 subject to u_i + u_j >= s on the pairs ``cand``.

    ``engine="ipm"`` uses the cvxopt interior-point QP with sparse
    constraints and then snaps the active set to an exact equality solve.
    ``engine="nnls"`` solves each connected component as a least-distance
    problem through its nonnegative least-squares dual (Lawson and Hanson);
    exact but slow beyond a few hundred atoms.  Atoms outside every
    candidate pair get u = 0.
    """
    if engine == "ipm":
        return _restricted_qp_ipm(n, q, pairs, cand)
    return _restricted_qp_nnls(n, q, pairs, cand)


def _restricted_qp_ipm(n, q, pairs, cand):
    u = np.zeros(n)
    if cand.size == 0:
        return u
    I, J, S = pairs.i[cand], pairs.j[cand], pairs.s[cand]
    nodes, inv = np.unique(np.concatenate([I, J]), return_inverse=True)
    m, k = cand.size, nodes.size
    qs = q[nodes]
    # scale u by 1/sqrt(q) columns so P is the identity
    sc = 1.0 / np.sqrt(qs)
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([inv[:m], inv[m:]])
    vals = -np.concatenate([sc[inv[:m]], sc[inv[m:]]])
    Gm = cvxopt.spmatrix(vals.tolist(), rows.tolist(), cols.tolist(), (m, k))
    P = cvxopt.spmatrix(2.0, range(k), range(k))
    opts = {"show_progress": False, "abstol": 1e-13, "reltol": 1e-13, "feastol": 1e-12, "maxiters": 200}
    res = _cvx.qp(P, cvxopt.matrix(0.0, (k, 1)), Gm, cvxopt.matrix(-S), options=opts)
    if res["x"] is None:
        return None
    w = np.array(res["x"]).ravel()
    z = np.array(res["z"]).ravel()
    x = np.maximum(w * sc, 0.0)
    u[nodes] = x
    # exact re-solve on the pairs carrying multiplier
    act = z > 1e-8 * max(float(np.max(z, initial=0.0)), 1e-300)
    v = _equality_qp(n, q, I[act], J[act], S[act], np.array([], dtype=int))
    if v is not None and np.all(v >= -1e-14):
        v = np.maximum(v, 0.0)
        if np.all(v[I] + v[J] - S >= -1e-13 * (1 + S)):
            return v
    return u


def _restricted_qp_nnls(n, q, pairs, cand):
    u = np.zeros(n)
    if cand.size == 0:
        return u
    I, J, S = pairs.i[cand], pairs.j[cand], pairs.s[cand]
    g = sp.coo_matrix((np.ones(I.size), (I, J)), shape=(n, n))
    ncomp, lab = connected_components(g, directed=False)
    sq = np.sqrt(q)
    order = np.argsort(lab[I], kind="stable")
    el = lab[I][order]
    bounds = np.searchsorted(el, np.arange(ncomp + 1))
    for cidx in range(ncomp):
        e = order[bounds[cidx] : bounds[cidx + 1]]
        if e.size == 0:
            continue
        nodes, inv = np.unique(np.concatenate([I[e], J[e]]), return_inverse=True)
        m, k = e.size, nodes.size
        li, lj = inv[:m], inv[m:]
        # E = [B^T; s^T] with B rows e_i/sqrt(q_i) + e_j/sqrt(q_j)
        E = np.zeros((k + 1, m))
        E[li, np.arange(m)] = 1.0 / sq[nodes[li]]
        E[lj, np.arange(m)] += 1.0 / sq[nodes[lj]]
        E[k] = S[e]
        f = np.zeros(k + 1)
        f[k] = 1.0
        lam, _ = nnls(E, f, maxiter=50 * (m + k))
        r = E @ lam - f
        if r[k] >= -1e-300:
            return None
        w = -r[:k] / r[k]
        u[nodes] = np.maximum(w / sq[nodes], 0.0)
    return u


def _per_atom_best(score, pairs, subset, k):
    """Indices (into pairs) of the ``k`` lowest-score pairs at every atom, within ``subset``."""
    if subset.size == 0:
        return subset
    ends = np.concatenate([pairs.i[subset], pairs.j[subset]])
    idx = np.concatenate([subset, subset])
    sc = np.concatenate([score[subset], score[subset]])
    o = np.lexsort((sc, ends))
    ends, idx = ends[o], idx[o]
    start = np.searchsorted(ends, ends, side="left")
    rank = np.arange(ends.size) - start
    return np.unique(idx[rank < k])


def _polish(u0, q, pairs, seed_pairs, feas_tol, slack=1e-6, max_iter=60, engine="ipm", per_atom=4):
    """Constraint generation on the exact QP, started from a guess ``u0``.

    The working set starts from the tightest pairs of every atom under u0
    plus ``seed_pairs``; each round adds the worst violated pairs per atom.
    Returns ``(u, None)`` for a point feasible for every pair, which is then
    globally optimal, or None.
    """
    margin = (u0[pairs.i] + u0[pairs.j] - pairs.s) / (1 + pairs.s)
    near = np.flatnonzero(margin <= slack)
    cand = np.union1d(_per_atom_best(margin, pairs, near, per_atom), seed_pairs)
    cand = np.union1d(cand, _per_atom_best(margin, pairs, np.arange(pairs.i.size), 1))
    n = u0.size
    for _ in range(max_iter):
        u = _restricted_qp(n, q, pairs, cand, engine)
        if u is None:
            return None
        viol = pairs.s - u[pairs.i] - u[pairs.j]
        bad = np.flatnonzero(viol > feas_tol)
        if bad.size == 0:
            return _snap(u, q, pairs), None
        cand = np.union1d(cand, _per_atom_best(-viol, pairs, bad, per_atom))
    return None


def _snap(u, q, pairs, rel=1e-10):
    """Re-solve the equalities of the active set so tight pairs hold to rounding."""
    margin = u[pairs.i] + u[pairs.j] - pairs.s
    act = np.flatnonzero(margin <= rel * (1 + pairs.s))
    v = _equality_qp(u.size, q, pairs.i[act], pairs.j[act], pairs.s[act], np.flatnonzero(u <= rel))
    if v is not None and np.all(v >= -1e-15):
        v = np.maximum(v, 0.0)
        if np.all(v[pairs.i] + v[pairs.j] - pairs.s >= -1e-14 * (1 + pairs.s)) and q @ (v * v) <= q @ (u * u) * (1 + 1e-12) + 1e-300:
            return v
    return u


def _equality_qp(n, q, I, J, S, pinned):
    """argmin sum q u^2 subject to u_i + u_j = s on the listed pairs and u = 0 on ``pinned``.

    Solved per connected component as a minimum-norm problem in w = sqrt(q) u.
    Returns None when some component is inconsistent.
    """
    u = np.zeros(n)
    if I.size == 0:
        return u
    g = sp.coo_matrix((np.ones(I.size), (I, J)), shape=(n, n))
    ncomp, lab = connected_components(g, directed=False)
    pin = np.zeros(n, dtype=bool)
    pin[pinned] = True
    sq = np.sqrt(q)
    order = np.argsort(lab[I], kind="stable")
    el = lab[I][order]
    bounds = np.searchsorted(el, np.arange(ncomp + 1))
    for cidx in range(ncomp):
        e = order[bounds[cidx] : bounds[cidx + 1]]
        if e.size == 0:
            continue
        nodes, inv = np.unique(np.concatenate([I[e], J[e]]), return_inverse=True)
        m, k = e.size, nodes.size
        pn = np.flatnonzero(pin[nodes])
        M = np.zeros((m + pn.size, k))
        M[np.arange(m), inv[:m]] = 1.0
        M[np.arange(m), inv[m:]] += 1.0
        M[m + np.arange(pn.size), pn] = 1.0
        b = np.concatenate([S[e], np.zeros(pn.size)])
        Mw = M / sq[nodes][None, :]
        w, *_ = np.linalg.lstsq(Mw, b, rcond=None)
        x = w / sq[nodes]
        if np.max(np.abs(M @ x - b)) > 1e-9 * (1 + np.max(np.abs(b))):
            return None
        u[nodes] = x
    return u


def dual_solve(nu, tol=1e-9, config=None):
    """Maximise sum q_j phi_j over pairwise-admissible potentials.

    Returns ``(PotentialValues, value)``.  ``value`` is the objective of a
    verified admissible potential; ``PotentialValues.bound`` is the cut LP
    bound, an upper bound on the optimum.
    """
    cfg = config or DualConfig(tol=tol)
    tol = cfg.tol if config is not None else tol
    n = len(nu)
    q = nu.weights
    pairs = pair_data(nu)
    scale = 1.0 + float(np.max(np.abs(pairs.c), initial=0.0))
    if pairs.i.size == 0:
        return PotentialValues(np.zeros(n), [], True, 0.0), 0.0

    cut_lp = _CutLP(nu, cfg.method)
    # seed cuts with the near-tight pairs of a reference line's potentials
    phi0 = _seed_phi(nu)
    u0 = _u(phi0)
    marg = u0[pairs.i] + u0[pairs.j] - pairs.s
    near = np.flatnonzero(marg <= cfg.seed_slack * (1 + pairs.s))

    max_rounds = cfg.max_rounds if cfg.max_rounds is not None else 10 * n * n
    feas_tol = 1e-12 * scale
    cut_tol = tol * scale
    best = None
    rounds = 0
    if cfg.polish and cfg.polish_first:
        got = _polish(u0, q, pairs, np.zeros(0, dtype=int), feas_tol, slack=cfg.seed_slack, engine=cfg.qp_engine)
        if got is not None:
            u = got[0]
            value = -float(q @ (u * u))
            log.debug("dual: QP constraint generation from the seed line gave %.15g", value)
            return _finish(nu, pairs, u, value, value, scale)
    if near.size:
        t0 = _tangent_t(u0[pairs.i[near]], u0[pairs.j[near]])
        cut_lp.add(pairs.i[near], pairs.j[near], t0, pairs.c[near])
    pair_index = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(pairs.i, pairs.j))}
    while True:
        sol = cut_lp.solve()
        phi = np.minimum(sol.x, 0.0)
        rounds += 1
        if cfg.polish:
            hot = {pair_index[(a, b)] for (a, b, _), w in zip(cut_lp.meta, sol.y_ub) if w > 1e-12 and (a, b) in pair_index}
            got = _polish(_u(phi), q, pairs, np.array(sorted(hot), dtype=int), feas_tol, engine=cfg.qp_engine)
            if got is not None:
                best = (got[0], -float(q @ (got[0] * got[0])))
                log.debug("dual round %d: polished to a feasible optimum %.15g (LP bound %.15g)", rounds, best[1], sol.objective)
                break
        keep, t, h = _separate(phi, pairs, cut_tol, cfg.cuts_per_atom)
        log.debug("dual round %d: %d cuts, bound %.12g, %d violated", rounds, len(cut_lp.rhs), sol.objective, keep.size)
        if keep.size == 0:
            break
        if rounds >= max_rounds:
            raise NotConverged(f"cut loop hit {max_rounds} rounds", bound=sol.objective, phi=phi)
        cut_lp.add(pairs.i[keep], pairs.j[keep], t[keep], pairs.c[keep])

    bound = float(sol.objective)
    if best is not None:
        # a QP point feasible for every pair is the optimum: the bound is attained
        bound = best[1]
    if best is None:
        # LP point with every cut satisfied to tol: scale up until each pair holds
        u = _u(phi)
        viol = pairs.s - u[pairs.i] - u[pairs.j]
        tot = u[pairs.i] + u[pairs.j]
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(viol > 0, viol / tot, 0.0)
        eps = float(np.max(need, initial=0.0)) * (1 + 1e-12)
        uf = u * (1 + eps)
        best = (uf, -float(q @ (uf * uf)))
    u, value = best
    return _finish(nu, pairs, u, value, bound, scale)


def _finish(nu, pairs, u, value, bound, scale):
    phi = -(u * u)
    ok, _ = check_admissible(phi, nu, tol=1e-9 * scale)
    margin = u[pairs.i] + u[pairs.j] - pairs.s
    act = np.flatnonzero(margin <= 1e-9 * (1 + pairs.s))
    tt = _tangent_t(u[pairs.i[act]], u[pairs.j[act]])
    active = [(int(a), int(b), float(x)) for a, b, x in zip(pairs.i[act], pairs.j[act], tt)]
    pv = PotentialValues(phi, active, bool(ok), bound)
    return pv, float(value)


def tangency_points(nu, phi):
    """Tangency points of the active pairs, with the tangent direction there.

    For an active pair (i, j, t) the point is (1 - t) y_i + t y_j and the
    common tangent of both level hyperbolas is |y_j - y_i| taken
    componentwise.  Atoms with zero potential are their own tangency point.
    Returns ``(points, directions)`` deduplicated, directions averaged.
    """
    Y = nu.atoms
    pts, dirs = [], []
    for i, j, t in phi.active_constraints:
        # a tangency at an end of the chord is the atom itself
        t = 0.0 if t < 1e-12 else 1.0 if t > 1 - 1e-12 else t
        pts.append((1 - t) * Y[i] + t * Y[j])
        d = np.abs(Y[j] - Y[i])
        dirs.append(d / np.hypot(*d))
    zero = np.flatnonzero(phi.phi >= -1e-14)
    for k in zero:
        pts.append(Y[k].copy())
        dirs.append(np.array([np.nan, np.nan]))
    if not pts:
        return np.zeros((0, 2)), np.zeros((0, 2))
    P = np.array(pts)
    D = np.array(dirs)
    scale = 1 + np.max(np.abs(P))
    key = np.round(P / (1e-9 * scale)).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    out_p = P[first]
    out_d = np.zeros_like(out_p)
    for g in range(len(first)):
        Dg = D[inv == g]
        Dg = Dg[np.all(np.isfinite(Dg), axis=1)]
        out_d[g] = Dg.mean(axis=0) if len(Dg) else np.nan
    return out_p, out_d


def _fill_directions(P, D):
    """Anchors without a tangent (zero-potential atoms) take the chord direction."""
    D = D.copy()
    o = np.lexsort((P[:, 1], P[:, 0]))
    for idx, k in enumerate(o):
        if np.all(np.isfinite(D[k])):
            continue
        prev = P[o[idx - 1]] if idx > 0 else None
        nxt = P[o[idx + 1]] if idx + 1 < len(o) else None
        if prev is not None and nxt is not None:
            d = np.maximum(nxt - prev, 0.0)
        elif prev is not None:
            d = np.maximum(P[k] - prev, 0.0)
        elif nxt is not None:
            d = np.maximum(nxt - P[k], 0.0)
        else:
            d = np.array([1.0, 1.0])
        n = np.hypot(*d)
        D[k] = d / n if n > 0 else np.array([1.0, 1.0]) / np.sqrt(2)
    D = D / np.hypot(D[:, 0], D[:, 1])[:, None]
    # rounding residue would turn an axis-parallel ray into a near-axis one
    return np.where(D < 1e-12, 0.0, D)


def recover_G(nu, phi, anchors=None, anchor_directions=None, tol=1e-6, check_tol=1e-6):
    """Monotone set G whose potential reproduces ``phi`` on the atoms.

    G is sandwiched between the lower and upper hyperbola envelopes of the
    data (y_j, phi_j) and follows a guide polyline through the tangency
    anchors.  Verifies |phi_G(y_j) - phi_j| <= ``check_tol`` for all atoms.
    """
    if not isinstance(phi, PotentialValues):
        phi = _as_potential(nu, phi)
    if anchors is None:
        anchors, anchor_directions = tangency_points(nu, phi)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)
    if anchor_directions is None:
        anchor_directions = np.full(anchors.shape, np.nan)
    D = _fill_directions(anchors, np.asarray(anchor_directions, dtype=float).reshape(-1, 2)) if len(anchors) else anchors
    data = list(zip(nu.atoms, phi.phi))
    G = build_envelope(data, side="between", anchors=anchors, anchor_directions=D, tol=min(tol, 1e-9))
    got = G.phi(nu.atoms)
    dev = got - phi.phi
    bad = np.flatnonzero(np.abs(dev) > check_tol)
    if bad.size:
        report = [(int(k), float(phi.phi[k]), float(got[k])) for k in bad]
        raise RecoveryError(f"recovery inconsistent at {bad.size} atoms (worst {np.max(np.abs(dev)):.3e})", report)
    return G


def _as_potential(nu, phi):
    phi = np.asarray(phi, dtype=float).ravel()
    pairs = pair_data(nu)
    u = _u(phi)
    margin = u[pairs.i] + u[pairs.j] - pairs.s
    act = np.flatnonzero(np.abs(margin) <= 1e-9 * (1 + pairs.s))
    tt = _tangent_t(u[pairs.i[act]], u[pairs.j[act]])
    active = [(int(a), int(b), float(x)) for a, b, x in zip(pairs.i[act], pairs.j[act], tt)]
    ok, _ = check_admissible(np.minimum(phi, 0.0), nu)
    return PotentialValues(phi, active, bool(ok))


def tangency_candidates(nu, phi, G, tol=1e-9, chunk=2_000_000):
    """Union over atoms of argmin_G c(., y_j), deduplicated and sorted.

    A point counts as a minimiser when its cost is within ``tol`` of
    phi_G(y_j); candidates are the exact piece minimisers and the vertices,
    as in ``argmin_set``, evaluated for all atoms at once.
    """
    P, D, S = G.pieces()
    V = G.vertices
    Y = nu.atoms
    out = []
    step = max(1, chunk // len(P))
    for lo in range(0, len(Y), step):
        Yb = Y[lo : lo + step]
        val, sv = _piece_minima(P, D, S, Yb)
        ph = np.min(val, axis=0)
        if np.any(ph == -np.inf):
            k = lo + int(np.flatnonzero(ph == -np.inf)[0])
            raise RecoveryError(f"no minimiser for atom {k}")
        ph = np.minimum(ph, 0.0)
        pi, aj = np.nonzero(val <= ph[None, :] + tol)
        out.append(P[pi] + sv[pi, aj][:, None] * D[pi])
        cv = cost(V[:, None, :], Yb[None, :, :])
        vi, _ = np.nonzero(cv <= ph[None, :] + tol)
        out.append(V[vi])
    P = np.vstack(out)
    scale = 1 + np.max(np.abs(P))
    key = np.round(P / (1e-9 * scale)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    P = P[np.sort(first)]
    return P[np.lexsort((P[:, 1], P[:, 0]))]
