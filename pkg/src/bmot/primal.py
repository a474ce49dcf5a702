"""Grid-restricted primal LP, the full solve pipeline and its certificates."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dual import DualConfig, PotentialValues, dual_solve, recover_G, tangency_candidates, tangency_points
from .geometry import MonotoneGraph, _quad_max
from .lp import LinearProgram, lp_solve
from .measures import DiscreteMeasure, Plan, cost, plan_value_forms

__all__ = [
    "SolveConfig",
    "SolveReport",
    "primal_solve",
    "solve",
    "first_order_check",
    "noncrossing_all",
    "tangency_check",
    "monotone_marginal_check",
    "classical_ot_check",
    "certify",
]

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    tol: float = 1e-8
    max_rounds: int = 5
    martingale_tol: float = 1e-8
    first_order_trials: int = 1000
    seed: int = 0
    # the classical transport LP is solved directly up to this many variables,
    # beyond it the c-transform certificate is used
    ot_lp_limit: int = 20_000
    method: str = "auto"
    dual: DualConfig = field(default_factory=lambda: DualConfig(tol=1e-9))


@dataclass
class SolveReport:
    plan: Plan
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    certificate_checks: dict
    phi: PotentialValues | None = None
    G: MonotoneGraph | None = None
    converged: bool = True
    timings: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.converged and all(self.certificate_checks.values())


def _with_mean(nu, grid):
    G = np.asarray(grid, dtype=float).reshape(-1, 2)
    G = np.vstack([G, nu.mean[None, :]])
    scale = 1 + np.max(np.abs(G))
    key = np.round(G / (1e-12 * scale)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    return G[np.sort(first)]


def _plan_lp(nu, X, cols, method):
    """LP over masses on the columns ``cols = (k, j)``; minimise sum pi c."""
    Y, q = nu.atoms, nu.weights
    K, J = len(X), len(Y)
    k, j = cols
    m = k.size
    c = cost(X[k], Y[j])
    # marginal rows 0..J-1, martingale rows J + 2k, J + 2k + 1
    r = np.concatenate([j, J + 2 * k, J + 2 * k + 1])
    cc = np.concatenate([np.arange(m)] * 3)
    v = np.concatenate([np.ones(m), Y[j, 0] - X[k, 0], Y[j, 1] - X[k, 1]])
    A = sp.csr_matrix((v, (r, cc)), shape=(J + 2 * K, m))
    b = np.concatenate([q, np.zeros(2 * K)])
    sol = lp_solve(LinearProgram(-c, A_eq=A, b_eq=b), method=method)
    return sol


def _price(nu, X, y_eq, tol, per_atom=4, per_point=2, chunk=4_000_000):
    """Improving columns by reduced profit -c - psi_j - lambda_k . (y_j - x_k).

    Keeps the best ``per_atom`` grid points for every atom and the best
    ``per_point`` atoms for every grid point among columns above ``tol``.
    Returns ``(k, j, profit, best)`` with ``best`` the largest profit.
    """
    Y = nu.atoms
    J = len(Y)
    psi = y_eq[:J]
    lam = y_eq[J:].reshape(-1, 2)
    ks, js, vs = [], [], []
    best = -np.inf
    step = max(1, chunk // J)
    for lo in range(0, len(X), step):
        Xb = X[lo : lo + step]
        Lb = lam[lo : lo + step]
        d1 = Y[None, :, 0] - Xb[:, None, 0]
        d2 = Y[None, :, 1] - Xb[:, None, 1]
        red = -(d1 * d2) - psi[None, :] - Lb[:, 0:1] * d1 - Lb[:, 1:2] * d2
        best = max(best, float(red.max()))
        m = min(per_atom, red.shape[0])
        top = np.argpartition(-red, m - 1, axis=0)[:m] if m < red.shape[0] else np.tile(np.arange(red.shape[0])[:, None], (1, J))
        kk, jj = top.ravel(), np.tile(np.arange(J), top.shape[0])
        p = min(per_point, J)
        topj = np.argpartition(-red, p - 1, axis=1)[:, :p] if p < J else np.tile(np.arange(J), (red.shape[0], 1))
        kk = np.concatenate([kk, np.repeat(np.arange(red.shape[0]), topj.shape[1])])
        jj = np.concatenate([jj, topj.ravel()])
        v = red[kk, jj]
        ok = v > tol
        ks.append(kk[ok] + lo)
        js.append(jj[ok])
        vs.append(v[ok])
    k, j, v = np.concatenate(ks), np.concatenate(js), np.concatenate(vs)
    if k.size:
        key = np.unique(k * J + j, return_index=True)[1]
        k, j, v = k[key], j[key], v[key]
    return k, j, v, best


def _initial_columns(nu, X, phi, slack, chunk=4_000_000):
    """Identity columns, the mean to every atom, and pairs near tangency under ``phi``."""
    Y = nu.atoms
    J = len(Y)
    scale = 1 + np.max(np.abs(Y))
    key = lambda P: np.round(np.atleast_2d(P) / (1e-12 * scale)).astype(np.int64)  # noqa: E731
    kx = {tuple(r): idx for idx, r in enumerate(key(X))}
    ks, js = [], []
    for jj, r in enumerate(key(Y)):
        hit = kx.get(tuple(r))
        if hit is not None:
            ks.append(hit)
            js.append(jj)
    km = kx.get(tuple(key(nu.mean)[0]))
    if km is None:
        # no mean on the grid: start from every column
        code = np.arange(len(X) * J)
        return code // J, code % J
    ks = np.array(ks + [km] * J, dtype=int)
    js = np.array(js + list(range(J)), dtype=int)
    if phi is not None:
        step = max(1, chunk // J)
        thr = phi[None, :] + slack * (1 + np.abs(phi[None, :]))
        for lo in range(0, len(X), step):
            C = cost(X[lo : lo + step, None, :], Y[None, :, :])
            kk, jj = np.nonzero(C <= thr)
            ks = np.concatenate([ks, kk + lo])
            js = np.concatenate([js, jj])
    code = np.unique(ks * J + js)
    return code // J, code % J


def primal_solve(
    nu, x_grid, phi=None, method="auto", tol=1e-12, max_iter=200, slack=1e-9, target=None, gap_tol=1e-10, append_mean=True
):
    """Optimal martingale plan with x-support on ``x_grid`` (plus the mean).

    Column generation over the pairs (grid point, atom): LP reduced costs
    price all pairs and the improving ones enter.  With ``target`` (a dual
    value, hence a lower bound) the loop also stops once the LP value is
    within ``gap_tol`` of it.  Returns ``(plan, value)`` with value the
    expected cost.  Without ``append_mean`` the grid is used as given and
    may be infeasible, which raises.
    """
    X = _with_mean(nu, x_grid) if append_mean else np.unique(np.asarray(x_grid, dtype=float).reshape(-1, 2), axis=0)
    k, j = _initial_columns(nu, X, None if phi is None else np.asarray(getattr(phi, "phi", phi)), slack)
    J = len(nu)
    for it in range(max_iter):
        sol = _plan_lp(nu, X, (k, j), method)
        if not sol.optimal:
            raise RuntimeError(f"primal LP {sol.status}")
        if target is not None and -sol.objective - target <= gap_tol:
            break
        scale = 1 + np.max(np.abs(sol.y_eq))
        nk, nj, nv, best = _price(nu, X, sol.y_eq, tol * scale)
        have = np.zeros(len(X) * J, dtype=bool)
        have[k * J + j] = True
        fresh = ~have[nk * J + nj]
        nk, nj = nk[fresh], nj[fresh]
        log.debug("primal round %d: %d columns, value %.15g, best profit %.3g, %d entering", it, k.size, -sol.objective, best, nk.size)
        if nk.size == 0:
            break
        k = np.concatenate([k, nk])
        j = np.concatenate([j, nj])
    P = np.zeros((len(X), len(nu)))
    np.add.at(P, (k, j), np.maximum(sol.x, 0.0))
    plan = _repair(nu, X, P)
    return plan, plan_value_forms(plan)[0]


def _repair(nu, X, P, prune=1e-12):
    """Drop negligible masses, restore the y-marginal and move x-atoms to barycentres."""
    P = np.where(P > prune, P, 0.0)
    colsum = P.sum(axis=0)
    P = P * np.where(colsum > 0, nu.weights / np.where(colsum > 0, colsum, 1.0), 0.0)[None, :]
    keep = P.sum(axis=1) > 0
    P, X = P[keep], X[keep]
    m = P.sum(axis=1)
    B = (P @ nu.atoms) / m[:, None]
    kk, jj = np.nonzero(P)
    return Plan(B, nu.atoms, np.column_stack([kk, jj, P[kk, jj]]))


# certificates ---------------------------------------------------------


def noncrossing_all(plan, tol=1e-9, chunk=4_000_000):
    """Pairwise hyperbola non-crossing over all support pairs; returns (ok, worst margin)."""
    x, y, _ = plan.support_pairs()
    n = len(x)
    cxy = cost(x, y)
    worst = -np.inf
    step = max(1, chunk // max(n, 1))
    for lo in range(0, n, step):
        a = slice(lo, lo + step)
        C = cost(y[a, None, :], y[None, :, :])
        h, _ = _quad_max(cxy[a, None], cxy[None, :], C)
        worst = max(worst, float(np.max(h)))
    return worst <= tol, worst


def tangency_check(plan, G, tol):
    """|c(x, y) - phi_G(y)| on the support, and the x-atoms lying on G."""
    x, y, _ = plan.support_pairs()
    ph = G.phi(plan.y_atoms)[plan.j]
    dev = float(np.max(np.abs(cost(x, y) - ph)))
    on_G = float(np.max(-G.phi(plan.x_atoms)))
    return dev <= tol and on_G <= tol, max(dev, on_G)


def monotone_marginal_check(plan, tol=1e-9, chunk=4_000_000):
    """x-atoms with mass form a monotone set: c(r, s) >= -tol for every pair."""
    X = plan.x_atoms[plan.x_mass() > 0]
    n = len(X)
    scale = 1.0 + float(np.max(np.abs(X), initial=0.0)) ** 2
    worst = 0.0
    step = max(1, chunk // max(n, 1))
    for lo in range(0, n, step):
        C = cost(X[lo : lo + step, None, :], X[None, :, :])
        worst = max(worst, float(-C.min()))
    return worst <= tol * scale, worst


def first_order_check(plan, trials=1000, rng_seed=0, tol=1e-8):
    """Two-point perturbation test on random pairs of support pairs.

    For eta = (1 - s) delta_(x0, y0) + s delta_(x1, y1) the plan must not
    beat sending eta's y-marginal to its barycentre:
    int c d eta <= int y1 y2 d eta - int y1 d eta int y2 d eta.
    """
    rng = np.random.default_rng(rng_seed)
    x, y, _ = plan.support_pairs()
    n = len(x)
    a = rng.integers(0, n, trials)
    b = rng.integers(0, n, trials)
    s = rng.integers(1, 10, trials) / 10.0
    lhs = (1 - s) * cost(x[a], y[a]) + s * cost(x[b], y[b])
    ey1 = (1 - s) * y[a, 0] + s * y[b, 0]
    ey2 = (1 - s) * y[a, 1] + s * y[b, 1]
    exy = (1 - s) * y[a, 0] * y[a, 1] + s * y[b, 0] * y[b, 1]
    return bool(np.all(lhs <= exy - ey1 * ey2 + tol))


def classical_ot_check(plan, tol=1e-8, lp_limit=20_000, method="auto"):
    """Is the plan an optimal classical coupling of its own marginals?

    Small instances solve the transport LP over all couplings of (mu, nu).
    Larger ones use the c-transform bound g_j = min_k c(x_k, y_j), f = 0,
    which is a feasible transport dual, so plan cost = sum nu g certifies.
    Returns ``(ok, plan cost - lower bound, route)``.
    """
    mu_mass = plan.x_mass()
    X = plan.x_atoms[mu_mass > 0]
    mu = mu_mass[mu_mass > 0]
    Y = plan.y_atoms
    nu = plan.y_mass()
    val = plan_value_forms(plan)[0]
    K, J = len(X), len(Y)
    if K * J <= lp_limit:
        C = cost(X[:, None, :], Y[None, :, :]).ravel()
        idx = np.arange(K * J).reshape(K, J)
        rows = np.concatenate([np.repeat(np.arange(K), J), K + np.tile(np.arange(J), K)])
        cols = np.concatenate([idx.ravel(), idx.ravel()])
        A = sp.csr_matrix((np.ones(2 * K * J), (rows, cols)), shape=(K + J, K * J))
        sol = lp_solve(LinearProgram(-C, A_eq=A, b_eq=np.concatenate([mu, nu])), method=method)
        best = -sol.objective
        gap = val - best
        return bool(gap <= tol * (1 + abs(val))), float(gap), "lp"
    g = np.full(J, np.inf)
    step = max(1, 4_000_000 // J)
    for lo in range(0, K, step):
        g = np.minimum(g, cost(X[lo : lo + step, None, :], Y[None, :, :]).min(axis=0))
    gap = val - float(nu @ g)
    return bool(gap <= tol * (1 + abs(val))), float(gap), "c-transform"


def certify(plan, G, nu=None, tol=1e-8, trials=1000, seed=0, lp_limit=20_000, martingale_tol=1e-8):
    """All named certificate checks for a plan against a dual set G."""
    checks = {}
    checks["martingale"] = plan.martingale_ok(martingale_tol) and not plan.check(nu, martingale_tol)
    checks["noncrossing"] = noncrossing_all(plan)[0]
    checks["tangency"] = tangency_check(plan, G, 10 * tol)[0] if G is not None else False
    checks["first_order"] = first_order_check(plan, trials, seed)
    checks["monotone_marginal"] = monotone_marginal_check(plan)[0]
    checks["classical_ot"] = classical_ot_check(plan, tol, lp_limit)[0]
    return checks


def _densify(G, X, pts):
    """Midpoints along G between consecutive grid points near the plan's x-atoms."""
    allp = np.vstack([X, pts])
    o = np.lexsort((allp[:, 1], allp[:, 0]))
    allp = allp[o]
    mids = 0.5 * (allp[:-1] + allp[1:])
    # snap midpoints onto G by the lower section
    lo = G.lower_section(mids[:, 0])
    hi = G.upper_section(mids[:, 0])
    mids[:, 1] = np.clip(mids[:, 1], lo, hi)
    return mids[np.all(np.isfinite(mids), axis=1)]


def solve(nu, tol=1e-8, max_rounds=5, config=None):
    """Dual, recovery of G, primal on the tangency grid, refinement and certificates."""
    cfg = config or SolveConfig(tol=tol, max_rounds=max_rounds)
    t0 = time.perf_counter()
    timings = {}
    pv, dval = dual_solve(nu, config=cfg.dual)
    timings["dual"] = time.perf_counter() - t0
    G = recover_G(nu, pv)
    timings["recover"] = time.perf_counter() - t0 - timings["dual"]
    anchors, _ = tangency_points(nu, pv)
    grid = np.vstack([anchors, nu.atoms])
    plan, pval = primal_solve(nu, grid, phi=pv, method=cfg.method, target=dval, gap_tol=0.1 * cfg.tol)
    rounds = 1
    gap = pval - dval
    while gap > cfg.tol and rounds < cfg.max_rounds:
        # near-minimisers along G first, then midpoints between grid points
        extra = tangency_candidates(nu, pv, G, tol=1e-7) if rounds == 1 else _densify(G, plan.x_atoms, grid)
        grid = np.vstack([grid, extra])
        plan, pval = primal_solve(nu, grid, phi=pv, method=cfg.method, target=dval, gap_tol=0.1 * cfg.tol)
        gap = pval - dval
        rounds += 1
    timings["primal"] = time.perf_counter() - t0 - timings["dual"] - timings["recover"]
    Gf = G
    if not tangency_check(plan, G, 10 * cfg.tol)[0]:
        # G through the plan's x-atoms, tangent to the hyperbolas of their atoms
        Gf = _recover_on_plan(nu, pv, plan, G)
    checks = certify(plan, Gf, nu, cfg.tol, cfg.first_order_trials, cfg.seed, cfg.ot_lp_limit, cfg.martingale_tol)
    checks["duality_gap"] = bool(-1e-8 <= gap <= cfg.tol)
    timings["certify"] = time.perf_counter() - t0 - sum(timings.values())
    return SolveReport(
        plan=plan,
        primal_value=float(pval),
        dual_value=float(dval),
        gap=float(gap),
        iterations=rounds,
        certificate_checks=checks,
        phi=pv,
        G=Gf,
        converged=bool(gap <= cfg.tol),
        timings=timings,
    )


def _recover_on_plan(nu, pv, plan, G):
    X = plan.x_atoms
    x, y, _ = plan.support_pairs()
    D = np.zeros_like(X)
    for kk in range(len(X)):
        sel = plan.k == kk
        d = np.abs(x[sel] - y[sel])
        d = d[np.hypot(d[:, 0], d[:, 1]) > 1e-12]
        if len(d):
            d = d / np.hypot(d[:, 0], d[:, 1])[:, None]
            D[kk] = d.mean(axis=0)
        else:
            D[kk] = np.nan
    try:
        return recover_G(nu, pv, anchors=X, anchor_directions=D)
    except Exception as exc:  # keep the dual-anchored G when the plan anchors misbehave
        log.warning("recovery on plan anchors failed (%s); using dual anchors", exc)
        return G
