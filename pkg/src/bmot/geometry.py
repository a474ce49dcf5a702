"""Maximal monotone sets in the plane and the potential they induce.

A :class:`MonotoneGraph` is a monotone polyline closed off by two infinite
rays.  For such a set ``G`` the potential is

    phi_G(y) = inf_{x in G} (x1 - y1)(x2 - y2),

which is evaluated exactly: along each segment or ray the cost is a quadratic
in the path parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import cost

__all__ = [
    "MonotoneGraph",
    "NotAttained",
    "NotDifferentiable",
    "EnvelopeError",
    "eval_phi",
    "eval_psi",
    "argmin_set",
    "dc_phi",
    "segments_E",
    "noncrossing_margin",
    "check_noncrossing",
    "check_admissible",
    "tangent_direction",
    "build_envelope",
    "phi_conjugate_check",
]

CROSS_TOL = 1e-9


class NotAttained(ValueError):
    """The infimum defining phi_G(y) is -inf, so no minimiser exists."""


class NotDifferentiable(ValueError):
    """phi_G has no gradient at the requested point (non-unique minimiser)."""


class EnvelopeError(ValueError):
    """Hyperbola regions overlap, so no separating monotone set exists."""


def _unit(d):
    d = np.asarray(d, dtype=float).reshape(2)
    return d


@dataclass(frozen=True, eq=False)
class MonotoneGraph:
    """Polyline ``vertices`` extended by ``-left_ray`` at the start and ``right_ray`` at the end.

    Ray directions have nonnegative components.  Consecutive vertices are
    weakly increasing in both coordinates and distinct.
    """

    vertices: np.ndarray
    left_ray: np.ndarray
    right_ray: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] == 0:
            raise ValueError("vertices must be a non-empty list of points")
        if not np.all(np.isfinite(V)):
            raise ValueError("vertices must be finite")
        for name in ("left_ray", "right_ray"):
            d = _unit(getattr(self, name))
            if not np.all(np.isfinite(d)) or np.any(d < 0) or not np.any(d > 0):
                raise ValueError(f"{name} must have nonnegative components, not both zero")
            d = d.copy()
            d.flags.writeable = False
            object.__setattr__(self, name, d)
        step = np.diff(V, axis=0)
        if np.any(step < 0):
            k = int(np.flatnonzero(np.any(step < 0, axis=1))[0])
            raise ValueError(f"vertices {k} and {k + 1} are not monotone")
        if np.any(np.all(step == 0, axis=1)):
            raise ValueError("consecutive vertices must differ")
        V = V.copy()
        V.flags.writeable = False
        object.__setattr__(self, "vertices", V)

    def __eq__(self, other):
        if not isinstance(other, MonotoneGraph):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.left_ray, other.left_ray)
            and np.array_equal(self.right_ray, other.right_ray)
        )

    __hash__ = None

    # constructors -------------------------------------------------------

    @classmethod
    def identity(cls):
        return cls([[0.0, 0.0]], [1.0, 1.0], [1.0, 1.0])

    @classmethod
    def line(cls, slope, through=(0.0, 0.0)):
        """Line of nonnegative (possibly infinite) slope through a point."""
        if slope < 0:
            raise ValueError("a monotone line needs slope >= 0")
        d = [0.0, 1.0] if math.isinf(slope) else [1.0, float(slope)]
        return cls([list(through)], d, d)

    @classmethod
    def vertical(cls, x1):
        return cls([[x1, 0.0]], [0.0, 1.0], [0.0, 1.0])

    # structure ----------------------------------------------------------

    def pieces(self):
        """Start points, directions and parameter ranges of every piece.

        Piece 0 is the left ray, the last piece the right ray; a point on a
        piece is ``start + s * direction`` with ``0 <= s <= smax``.
        """
        V = self.vertices
        P = np.vstack([V[:1], V[:-1], V[-1:]])
        D = np.vstack([-self.left_ray, np.diff(V, axis=0), self.right_ray])
        S = np.ones(len(P))
        S[0] = S[-1] = np.inf
        return P, D, S

    def sample(self, ray_length=1.0):
        """Vertices plus one point on each ray, for plotting and spot checks."""
        V = self.vertices
        a = V[0] - ray_length * self.left_ray / np.linalg.norm(self.left_ray)
        b = V[-1] + ray_length * self.right_ray / np.linalg.norm(self.right_ray)
        return np.vstack([a, V, b])

    def lower_section(self, r):
        """inf{x2 : (r, x2) in G}; -inf/+inf outside the projection on the first axis."""
        return self._section(np.asarray(r, dtype=float), lower=True)

    def upper_section(self, r):
        return self._section(np.asarray(r, dtype=float), lower=False)

    def _section(self, r, lower):
        V = self.vertices
        lr, rr = self.left_ray, self.right_ray
        r = np.atleast_1d(np.asarray(r, dtype=float))
        x, y = V[:, 0], V[:, 1]
        n = len(x)
        out = np.empty(r.shape)
        if lower:
            k = np.clip(np.searchsorted(x, r, side="left"), 0, n - 1)
            a, b = np.maximum(k - 1, 0), k
        else:
            k = np.clip(np.searchsorted(x, r, side="right") - 1, 0, n - 1)
            a, b = k, np.minimum(k + 1, n - 1)
        hit = x[k] == r
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(x[b] > x[a], (r - x[a]) / np.where(x[b] > x[a], x[b] - x[a], 1.0), 0.0)
        out[:] = np.where(hit, y[k], y[a] + w * (y[b] - y[a]))
        left, right = r < x[0], r > x[-1]
        with np.errstate(invalid="ignore", divide="ignore"):
            out[left] = y[0] - (x[0] - r[left]) * lr[1] / lr[0] if lr[0] > 0 else -np.inf
            out[right] = y[-1] + (r[right] - x[-1]) * rr[1] / rr[0] if rr[0] > 0 else np.inf
        if lower and lr[0] == 0:
            out[r == x[0]] = -np.inf
        if not lower and rr[0] == 0:
            out[r == x[-1]] = np.inf
        return out

    def contains(self, x, tol=1e-9):
        return bool(eval_phi(self, x) >= -tol)

    # potential ----------------------------------------------------------

    def minimize(self, Y, chunk=2_000_000):
        """Exact per-point minimum of c(., y) over G.

        Returns ``(values, points)``; ``values`` may be ``-inf`` where a ray
        drives the cost down without bound (``points`` is then NaN).
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        P, D, S = self.pieces()
        N = len(P)
        vals = np.empty(len(Y))
        pts = np.empty((len(Y), 2))
        step = max(1, chunk // N)
        for lo in range(0, len(Y), step):
            v, p = _minimize_block(P, D, S, Y[lo : lo + step])
            vals[lo : lo + step] = v
            pts[lo : lo + step] = p
        return np.minimum(vals, 0.0), pts

    def phi(self, Y):
        return self.minimize(Y)[0]


def _piece_minima(P, D, S, Y):
    """Minimum value and parameter of c(p + s d, y) for every piece and point.

    Arrays have shape (pieces, points).  The quadratic is a + b s + e s^2
    with e = d1 d2 >= 0.
    """
    u1 = P[:, 0:1] - Y[None, :, 0]
    u2 = P[:, 1:2] - Y[None, :, 1]
    d1, d2 = D[:, 0:1], D[:, 1:2]
    a = u1 * u2
    b = u1 * d2 + u2 * d1
    e = d1 * d2
    smax = S[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s_int = np.where(e > 0, -b / (2 * np.where(e > 0, e, 1.0)), 0.0)
    s = np.where(e > 0, np.clip(s_int, 0.0, smax), np.where(b < 0, np.broadcast_to(smax, b.shape), 0.0))
    finite = np.isfinite(s)
    s_f = np.where(finite, s, 0.0)
    val = np.where(finite, a + b * s_f + e * s_f * s_f, -np.inf)
    return val, s


def _minimize_block(P, D, S, Y):
    val, s = _piece_minima(P, D, S, Y)
    best = np.argmin(val, axis=0)
    cols = np.arange(Y.shape[0])
    v = val[best, cols]
    sb = s[best, cols]
    with np.errstate(invalid="ignore"):
        pts = P[best] + sb[:, None] * D[best]
    pts[~np.isfinite(v)] = np.nan
    return v, pts


def eval_phi(G, y):
    """phi_G(y) = inf over G of c(x, y); a float, possibly -inf."""
    return float(G.phi(np.asarray(y, dtype=float).reshape(1, 2))[0])


def eval_psi(G, y):
    """psi_G(y) = y1 y2 - phi_G(y), +inf where phi_G(y) = -inf."""
    y = np.asarray(y, dtype=float).reshape(2)
    p = eval_phi(G, y)
    return math.inf if p == -math.inf else float(y[0] * y[1] - p)


def _dedupe(points, tol):
    out = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in out):
            out.append(p)
    return out


def argmin_set(G, y, tol=1e-9):
    """Points of G whose cost against ``y`` is within ``tol`` of phi_G(y).

    The candidates are the exact minimiser on every piece plus every vertex,
    so a minimising arc of a sampled curve shows up as its vertices.
    """
    y = np.asarray(y, dtype=float).reshape(1, 2)
    P, D, S = G.pieces()
    val, s = _piece_minima(P, D, S, y)
    val, s = val[:, 0], s[:, 0]
    phi = float(np.min(val))
    if phi == -math.inf:
        raise NotAttained("phi_G(y) = -inf: infimum not attained")
    phi = min(phi, 0.0)
    hit = np.flatnonzero(val <= phi + tol)
    cand = [P[i] + s[i] * D[i] for i in hit]
    cv = cost(G.vertices, y[0])
    cand += [G.vertices[i] for i in np.flatnonzero(cv <= phi + tol)]
    scale = 1.0 + float(np.max(np.abs(G.vertices)))
    cand = sorted(cand, key=lambda p: (p[0], p[1]))
    out = _dedupe(cand, 1e-12 * scale)
    if not out:
        raise NotAttained("empty minimiser set")
    return [np.asarray(p) for p in out]


def dc_phi(G, y, h=1e-5, fd_tol=1e-3, cluster=1e-6):
    """The unique minimiser D^c phi(y) = (y1 - d phi / d y2, y2 - d phi / d y1).

    Raises :class:`NotDifferentiable` when the minimiser is not unique (up to
    ``cluster``) or disagrees with central differences of phi_G.
    """
    y = np.asarray(y, dtype=float).reshape(2)
    pts = argmin_set(G, y, tol=1e-12 * (1.0 + abs(eval_phi(G, y))))
    if len(pts) > 1:
        A = np.array(pts)
        if np.max(np.ptp(A, axis=0)) > cluster:
            raise NotDifferentiable(f"argmin has {len(pts)} separated points, e.g. {A[0]} and {A[-1]}")
    x = G.minimize(y.reshape(1, 2))[1][0]
    probes = np.array([y + [h, 0], y - [h, 0], y + [0, h], y - [0, h]])
    f = G.phi(probes)
    if not np.all(np.isfinite(f)):
        raise NotDifferentiable("phi_G is -inf next to y")
    g1 = (f[0] - f[1]) / (2 * h)
    g2 = (f[2] - f[3]) / (2 * h)
    fd = np.array([y[0] - g2, y[1] - g1])
    if np.max(np.abs(fd - x)) > fd_tol:
        raise NotDifferentiable(f"minimiser {x} disagrees with finite differences {fd}")
    return x


def segments_E(G):
    """Maximal vertical and horizontal segments of G.

    Each entry is ``(coordinate, (lo, hi))`` where ``lo`` and ``hi`` are
    endpoint points; unbounded ends carry an infinite coordinate.
    """
    P, D, S = G.pieces()
    n = len(P)
    ends = []
    for i in range(n):
        if i == 0:
            a = P[0] - np.where(D[0] != 0, np.inf, 0.0) * np.sign(-D[0])
            b = P[0]
        elif i == n - 1:
            a = P[i]
            b = P[i] + np.where(D[i] != 0, np.inf, 0.0)
        else:
            a, b = P[i], P[i] + D[i]
        ends.append((np.where(np.isnan(a), P[i], a), np.where(np.isnan(b), P[i], b)))

    def runs(axis):
        out = []
        cur = None
        for i in range(n):
            if D[i][axis] == 0:
                lo, hi = ends[i]
                if cur is not None:
                    cur = (cur[0], hi)
                else:
                    cur = (lo, hi)
            else:
                if cur is not None:
                    out.append(cur)
                cur = None
        if cur is not None:
            out.append(cur)
        return [(float(lo[axis]), (tuple(map(float, lo)), tuple(map(float, hi)))) for lo, hi in out]

    return runs(0), runs(1)


# pairwise quadratic checks ---------------------------------------------


def _quad_max(A, B, C):
    """max over t in [0, 1] of h(t) = A + (B - A - C) t + C t^2, and the maximiser.

    This is (1 - t) A + t B - t (1 - t) C.  Works elementwise.
    """
    A, B, C = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float), np.asarray(C, float))
    best = np.where(B > A, B, A)
    tb = np.where(B > A, 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = np.where(C < 0, 0.5 + (B - A) / np.where(C < 0, -2 * C, 1.0), -1.0)
    inside = (C < 0) & (ts > 0) & (ts < 1)
    hs = np.where(inside, (1 - ts) * A + ts * B - ts * (1 - ts) * C, -np.inf)
    take = hs > best
    return np.where(take, hs, best), np.where(take, ts, tb)


def noncrossing_margin(x0, y0, x1, y1):
    """max_t of (1-t) c(x0,y0) + t c(x1,y1) - t (1-t) c(y0,y1), and its maximiser."""
    h, t = _quad_max(cost(x0, y0), cost(x1, y1), cost(y0, y1))
    return float(h), float(t)


def check_noncrossing(x0, y0, x1, y1, tol=CROSS_TOL):
    """Pairs (x0, y0), (x1, y1) do not cross in the sense of the hyperbola test."""
    return noncrossing_margin(x0, y0, x1, y1)[0] <= tol


def check_admissible(phi, nu, tol=CROSS_TOL):
    """Pairwise test (1-t) phi_i + t phi_j <= t (1-t) c(y_i, y_j) on [0, 1].

    Pairs with c(y_i, y_j) >= 0 are skipped: the left side is then a chord of
    nonpositive endpoint values and the right side is nonnegative.  Returns
    ``(ok, witness)`` with witness ``(i, j, t)`` of the worst violation.
    """
    phi = np.asarray(getattr(phi, "phi", phi), dtype=float).ravel()
    Y = nu.atoms if hasattr(nu, "atoms") else np.asarray(nu, dtype=float)
    if phi.size != len(Y):
        raise ValueError("one potential value per atom is required")
    if np.any(phi > 1e-12):
        raise ValueError("potentials must be nonpositive")
    C = cost(Y[:, None, :], Y[None, :, :])
    i, j = np.nonzero(np.triu(C < 0, 1))
    if i.size == 0:
        return True, None
    h, t = _quad_max(phi[i], phi[j], C[i, j])
    k = int(np.argmax(h))
    if h[k] <= tol:
        return True, None
    return False, (int(i[k]), int(j[k]), float(t[k]))


def tangent_direction(x, y):
    """Tangent direction at ``x`` of the level hyperbola of c(., y) through ``x``."""
    d = np.abs(np.asarray(x, float) - np.asarray(y, float))
    n = np.hypot(*d)
    return d / n if n > 0 else np.array([1.0, 1.0]) / math.sqrt(2)


# envelopes -------------------------------------------------------------


class _Envelope:
    """Lower and upper envelope functions of the hyperbola regions.

    ``low`` is the boundary of the region lying under the branches on
    z1 > y1 ; ``high`` the boundary of the region over the branches on
    z1 < y1.  Levels at or above ``-zero_tol`` count as zero.
    """

    def __init__(self, Y, levels, zero_tol):
        self.Y = np.asarray(Y, dtype=float).reshape(-1, 2)
        self.lv = np.minimum(np.asarray(levels, dtype=float).ravel(), 0.0)
        self.zero = self.lv >= -zero_tol
        self.lv = np.where(self.zero, 0.0, self.lv)

    def _terms(self, z, branch_right):
        z = np.asarray(z, dtype=float)[:, None]
        y1, y2 = self.Y[None, :, 0], self.Y[None, :, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return y2 + self.lv[None, :] / (z - y1), z, y1

    def low(self, z, right=False):
        """sup of y2 + level/(z - y1) over data with y1 < z (plus zero-level data at y1 = z if ``right``)."""
        if len(self.Y) == 0:
            return np.full(np.shape(z), -np.inf)
        t, zz, y1 = self._terms(z, True)
        live = zz > y1
        if right:
            live = live | ((zz == y1) & self.zero[None, :])
        t = np.where(self.zero[None, :], self.Y[None, :, 1], t)
        return np.max(np.where(live, t, -np.inf), axis=1)

    def high(self, z, left=False):
        if len(self.Y) == 0:
            return np.full(np.shape(z), np.inf)
        t, zz, y1 = self._terms(z, False)
        live = zz < y1
        if left:
            live = live | ((zz == y1) & self.zero[None, :])
        t = np.where(self.zero[None, :], self.Y[None, :, 1], t)
        return np.min(np.where(live, t, np.inf), axis=1)


def _guide(anchors, directions):
    """Monotone polyline through the anchors, bent at tangent-line intersections.

    Consecutive anchors p, q are joined through the meeting point of their
    tangent lines when it lies in the box spanned by p and q, otherwise by
    the chord.  End rays follow the extreme tangent directions.
    """
    if len(anchors) == 0:
        return MonotoneGraph.identity()
    A = np.asarray(anchors, dtype=float)
    Dd = np.asarray(directions, dtype=float)
    order = np.lexsort((A[:, 1], A[:, 0]))
    A, Dd = A[order], Dd[order]
    A[:, 1] = np.maximum.accumulate(A[:, 1])
    verts = [A[0]]
    for k in range(1, len(A)):
        p, q = verts[-1], A[k]
        if np.max(np.abs(q - p)) <= 1e-13 * (1 + np.max(np.abs(q))):
            continue
        dp, dq = Dd[k - 1], Dd[k]
        M = np.column_stack([dp, -dq])
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(det) > 1e-12:
            s = np.linalg.solve(M, q - p)
            w = p + s[0] * dp
            lo, hi = np.minimum(p, q), np.maximum(p, q)
            slack = 1e-12 * (1 + np.max(np.abs(w)))
            if np.all(w >= lo - slack) and np.all(w <= hi + slack):
                w = np.clip(w, lo, hi)
                if np.max(np.abs(w - p)) > 1e-13 and np.max(np.abs(w - q)) > 1e-13:
                    verts.append(w)
        verts.append(q)
    V = np.array(verts)
    return MonotoneGraph(V, Dd[0], Dd[-1])


def _graph_eval(G, z, side):
    """Value of the monotone graph as a function of the first coordinate.

    ``side="left"`` gives the lower section (left limit at vertical steps),
    ``side="right"`` the upper one.
    """
    return G.lower_section(z) if side == "left" else G.upper_section(z)


def _median3(a, b, c):
    return np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))


def _refine(f, z, tol, max_rounds=40, max_points=200_000, ends=None):
    """Adaptive grid on which the polyline of f has chord error below ``tol``.

    The error of an interval is the largest distance from the curve at the
    quarter points and the midpoint to the chord, which is scale-free near
    steep parts.  Probing three points catches a median switching between
    branches inside an interval, where the midpoint alone can sit on the chord.
    Only freshly split intervals are probed again.

    ``ends = (va, vb)`` supplies one-sided endpoint values for the intervals
    between consecutive ``z``; the result then lists both values at shared
    endpoints.  Returns ``(z, v)`` sorted by z and then v.
    """
    z = np.asarray(z, dtype=float)
    if ends is None:
        z = np.unique(z)
        v = f(z)
        va, vb = v[:-1], v[1:]
    else:
        va, vb = ends
    za, zb = z[:-1], z[1:]
    out_z, out_v = [za, zb], [va, vb]
    total = z.size
    fr = np.array([0.25, 0.5, 0.75])
    for _ in range(max_rounds):
        if za.size == 0 or total > max_points:
            break
        dz = zb - za
        dv = vb - va
        den = np.hypot(dz, dv)
        zm = za[:, None] + fr[None, :] * dz[:, None]
        vm = f(zm.ravel()).reshape(zm.shape)
        num = np.abs(dz[:, None] * (vm - va[:, None]) - dv[:, None] * (zm - za[:, None]))
        with np.errstate(invalid="ignore", divide="ignore"):
            err = np.where(den[:, None] > 0, num / den[:, None], 0.0)
        bad = np.any(~(err <= tol) & np.isfinite(vm), axis=1)
        if not np.any(bad):
            break
        zm, vm = zm[bad], vm[bad]
        out_z.append(zm.ravel())
        out_v.append(vm.ravel())
        total += zm.size
        Zs = np.column_stack([za[bad], zm, zb[bad]])
        Vs = np.column_stack([va[bad], vm, vb[bad]])
        za, zb = Zs[:, :-1].ravel(), Zs[:, 1:].ravel()
        va, vb = Vs[:, :-1].ravel(), Vs[:, 1:].ravel()
    z = np.concatenate(out_z)
    v = np.concatenate(out_v)
    o = np.lexsort((v, z))
    z, v = z[o], v[o]
    keep = np.ones(z.size, dtype=bool)
    keep[1:] = (z[1:] != z[:-1]) | (v[1:] != v[:-1])
    return z[keep], v[keep]


def _ray_ok(start, d, env, sign, n=60):
    """Sampled check that a ray stays outside the open hyperbola regions.

    A vertical ray is exact: going down it must not lie right of any datum,
    going up not left of any.
    """
    if d[0] == 0:
        if sign < 0:
            return bool(start[0] <= float(np.min(env.Y[:, 0])))
        return bool(start[0] >= float(np.max(env.Y[:, 0])))
    s = np.geomspace(1e-6, 1e8, n)
    pts = start[None, :] + sign * s[:, None] * d[None, :]
    lo = env.low(pts[:, 0], right=True)
    hi = env.high(pts[:, 0], left=True)
    slack = 1e-9 * (1 + np.abs(pts[:, 1]))
    return bool(np.all(pts[:, 1] >= lo - slack) and np.all(pts[:, 1] <= hi + slack))


def build_envelope(
    tangency_data,
    side="below",
    anchors=None,
    anchor_directions=None,
    tol=1e-7,
    zero_tol=1e-12,
    check=True,
    admissible_tol=1e-8,
):
    """Monotone set bounding the hyperbola regions of ``tangency_data``.

    ``tangency_data`` is a list of ``(y, level)``.  Every datum forbids the
    open sets {z1 > y1, z2 < y2 + level/(z1 - y1)} and
    {z1 < y1, z2 > y2 + level/(z1 - y1)}.  The union of the first family is
    bounded by the graph of an increasing function ``low``, the union of the
    second by ``high``.

    ``side="below"`` returns the graph of ``low``, ``side="above"`` that of
    ``high``.  ``side="between"`` returns the graph of
    median(low, guide, high), where the guide is a polyline through
    ``anchors`` (see ``_guide``); any point of the plane between ``low`` and
    ``high`` avoids every forbidden region, so the result is admissible for
    all data.  With no data the identity line is returned.
    """
    data = list(tangency_data)
    if data:
        Y = np.array([np.asarray(y, dtype=float) for y, _ in data]).reshape(-1, 2)
        lv = np.array([float(l) for _, l in data])
    else:
        Y, lv = np.zeros((0, 2)), np.zeros(0)
    if np.any(lv > zero_tol):
        raise ValueError("levels must be nonpositive")
    if check and len(Y) > 1:
        ok, w = check_admissible(np.minimum(lv, 0.0), Y, tol=admissible_tol)
        if not ok:
            raise EnvelopeError(f"regions overlap, no separating monotone set (pair {w[0]}, {w[1]} at t={w[2]:.6g})")
    if side not in ("below", "above", "between"):
        raise ValueError(f"unknown side {side!r}")
    if anchors is not None and len(anchors) and side != "between":
        raise ValueError("anchors only apply to side='between'")
    if len(Y) == 0 and side != "between":
        return MonotoneGraph.identity()
    env = _Envelope(Y, lv, zero_tol)

    if side == "between":
        A = np.zeros((0, 2)) if anchors is None else np.asarray(anchors, dtype=float).reshape(-1, 2)
        if anchor_directions is None:
            Dd = np.tile([1.0, 1.0], (len(A), 1)) / math.sqrt(2)
        else:
            Dd = np.asarray(anchor_directions, dtype=float).reshape(-1, 2)
        guide = _guide(A, Dd)
        if len(Y) == 0:
            return guide
        # sampling can miss a guide excursion between grid points; wherever G
        # dips below a datum's level, sample at that datum's minimiser and rebuild
        forced = np.zeros(0)
        for _ in range(30):
            G = _between(env, guide, A, tol, forced)
            vals, pts = G.minimize(Y)
            bad = vals < np.minimum(lv, 0.0) - 10 * tol * (1 + np.abs(lv))
            if not np.any(bad):
                break
            new = pts[bad, 0]
            new = new[np.isfinite(new)]
            if new.size == 0:
                break
            forced = np.unique(np.concatenate([forced, new]))
        return G
    return _one_side(env, side, tol)


def _window(xs, levels=(), pad_frac=1.0):
    lo, hi = float(np.min(xs)), float(np.max(xs))
    deep = math.sqrt(float(np.max(-np.asarray(levels), initial=0.0)))
    pad = 2.0 * max(1.0, pad_frac * (hi - lo), deep)
    return lo - pad, hi + pad, pad


def _one_side(env, side, tol):
    Y, lv = env.Y, env.lv
    lo, hi, pad = _window(Y[:, 0], lv)
    # Near the vertical asymptote of the extreme datum the envelope is cut at
    # depth ``pad`` below (above) the data and continued by a vertical ray on
    # the asymptote.  The cut stays outside the forbidden region, so
    # potentials are unaffected, and keeps cost errors of far vertices small.
    if side == "below":
        f = lambda z: env.low(z)  # noqa: E731
        fr = lambda z: env.low(z, right=True)  # noqa: E731
        y0 = float(np.min(Y[:, 0]))
        neg = (~env.zero) & (Y[:, 0] == y0)
        depth = float(np.min(Y[:, 1])) - 5 * pad
        z_start = y0 + (float(np.max(-lv[neg] / (Y[neg, 1] - depth))) if np.any(neg) else 0.0)
        z_grid = [z_start, hi]
        z_grid += list(np.geomspace(max(z_start - y0, 1e-300), hi - y0, 80) + y0)
    else:
        f = lambda z: env.high(z, left=True)  # noqa: E731
        fr = lambda z: env.high(z)  # noqa: E731
        y0 = float(np.max(Y[:, 0]))
        neg = (~env.zero) & (Y[:, 0] == y0)
        depth = float(np.max(Y[:, 1])) + 5 * pad
        z_start = y0 - (float(np.max(-lv[neg] / (depth - Y[neg, 1]))) if np.any(neg) else 0.0)
        z_grid = [lo, z_start]
        z_grid += list(y0 - np.geomspace(max(y0 - z_start, 1e-300), y0 - lo, 80))
    jumps = np.unique(Y[env.zero, 0])
    z_grid += list(jumps) + list(np.linspace(lo, hi, 64))
    z_grid = np.array(z_grid)
    z_grid = z_grid[(z_grid >= min(z_start, lo)) & (z_grid <= max(z_start, hi))]
    if side == "below":
        z_grid = z_grid[z_grid >= z_start]
    else:
        z_grid = z_grid[z_grid <= z_start]

    def safe(z):
        v = f(z)
        return np.where(np.isfinite(v), v, np.nan)

    pts = _sample_with_jumps(safe, lambda z: np.where(np.isfinite(fr(z)), fr(z), np.nan), z_grid, jumps, tol)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if side == "below":
        # vertical asymptote of the leftmost datum carries the left ray
        if pts[0, 0] > y0:
            pts = np.vstack([[y0, pts[0, 1]], pts])
        left = np.array([0.0, 1.0])
        right = _end_direction(pts, -1)
        asym = float(np.max(Y[:, 1]))
        if right[1] == 0 or not _ray_ok(pts[-1], right, env, +1):
            if pts[-1, 1] < asym:
                pts = np.vstack([pts, [pts[-1, 0], asym]])
            right = np.array([1.0, 0.0])
    else:
        if pts[-1, 0] < y0:
            pts = np.vstack([pts, [y0, pts[-1, 1]]])
        right = np.array([0.0, 1.0])
        left = _end_direction(pts, 0)
        asym = float(np.min(Y[:, 1]))
        if left[1] == 0 or not _ray_ok(pts[0], left, env, -1):
            if pts[0, 1] > asym:
                pts = np.vstack([[pts[0, 0], asym], pts])
            left = np.array([1.0, 0.0])
    return MonotoneGraph(_clean(pts), left, right)


def _end_direction(pts, end):
    if end == -1:
        d = pts[-1] - pts[-2]
    else:
        d = pts[1] - pts[0]
    d = np.maximum(d, 0.0)
    n = np.hypot(*d)
    return d / n if n > 0 else np.array([1.0, 0.0])


def _sample_with_jumps(f_left, f_right, z_grid, jumps, tol):
    """Polyline samples of a monotone function with vertical steps at ``jumps``.

    Inside each interval of the grid f is continuous; an interval starting at
    a jump uses the right limit there.
    """
    z = np.unique(np.concatenate([z_grid, jumps]))
    is_jump = np.isin(z, jumps)
    vl = f_left(z)
    vr = np.where(is_jump, f_right(z), vl)
    zs, vs = _refine(f_left, z, tol, ends=(vr[:-1], vl[1:]))
    return np.column_stack([zs, vs])


def _clean(pts):
    """Drop repeated or non-monotone points caused by rounding, collapse collinear runs."""
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    out = np.column_stack([np.maximum.accumulate(pts[:, 0]), np.maximum.accumulate(pts[:, 1])])
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.any(out[1:] > out[:-1], axis=1)
    out = out[keep]
    if len(out) > 2:
        a, b, c = out[:-2], out[1:-1], out[2:]
        cr = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        scale = np.hypot(*(b - a).T) * np.hypot(*(c - a).T)
        mid = np.abs(cr) > 1e-14 * scale
        out = out[np.concatenate([[True], mid, [True]])]
    return out


def _snap_vertical(pts, left, right, env, eps=1e-9):
    """Move a vertical end ray that misses the extreme datum abscissa by rounding onto it."""
    if left[0] == 0:
        y0 = float(np.min(env.Y[:, 0]))
        if y0 < pts[0, 0] <= y0 + eps * (1 + abs(y0)):
            pts[0, 0] = y0
    if right[0] == 0:
        y0 = float(np.max(env.Y[:, 0]))
        if y0 - eps * (1 + abs(y0)) <= pts[-1, 0] < y0:
            pts[-1, 0] = y0
    return pts


def _between(env, guide, anchors, tol, forced=()):
    xs = np.concatenate([env.Y[:, 0], anchors[:, 0], guide.vertices[:, 0]])
    lo, hi, pad = _window(xs, env.lv)
    # depth cut: low <= max y2 and high >= min y2, so clipping the median to a
    # band around the data keeps it between them, and tangency points (convex
    # combinations of atoms) never move.  Without it G follows a hyperbola
    # into its vertical asymptote and chords there cross the region.
    floor = float(np.min(env.Y[:, 1])) - 5 * pad
    ceil = float(np.max(env.Y[:, 1])) + 5 * pad

    def F(z, side):
        if side == "left":
            L, U = env.low(z), env.high(z, left=True)
        else:
            L, U = env.low(z, right=True), env.high(z)
        g = _graph_eval(guide, z, side)
        return np.clip(_median3(L, g, U), floor, ceil)

    jumps = np.unique(np.concatenate([env.Y[env.zero, 0], guide.vertices[:, 0]]))
    jumps = jumps[(jumps > lo) & (jumps < hi)]
    z_grid = np.unique(np.concatenate([np.linspace(lo, hi, 129), jumps, env.Y[:, 0], np.asarray(forced, dtype=float)]))
    pts = _sample_with_jumps(lambda z: F(z, "left"), lambda z: F(z, "right"), z_grid, jumps, tol)
    # vertical steps appear as a left limit followed by a right limit at the jump
    a, b = F(jumps, "left"), F(jumps, "right")
    step = np.isfinite(a) & np.isfinite(b) & (b > a)
    if np.any(step):
        pts = np.vstack([pts, np.column_stack([jumps[step], a[step]]), np.column_stack([jumps[step], b[step]])])
    o = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = _clean(pts[o])
    if len(pts) == 0:
        # the guide is a vertical line and the median never leaves it
        return guide

    # guide rays when they stay clear of the regions, otherwise a step to the
    # horizontal asymptote of the envelope, which is always clear
    left, right = guide.left_ray, guide.right_ray
    pts = _snap_vertical(pts, left, right, env)
    if not _ray_ok(pts[0], left, env, -1):
        asym = float(np.min(env.Y[:, 1]))
        if pts[0, 1] > asym:
            pts = np.vstack([[pts[0, 0], asym], pts])
        left = np.array([1.0, 0.0])
    if not _ray_ok(pts[-1], right, env, +1):
        asym = float(np.max(env.Y[:, 1]))
        if pts[-1, 1] < asym:
            pts = np.vstack([pts, [pts[-1, 0], asym]])
        right = np.array([1.0, 0.0])
    return MonotoneGraph(_clean(pts), left, right)


def phi_conjugate_check(G, x, probe_ys, member_tol=1e-9):
    """Upper bound on phi^c(x) = inf_y c(x, y) - phi_G(y) from the probes.

    The bound is capped at 0 since phi^c <= 0.  For ``x`` on G the
    uncapped probe minimum is nonnegative, which is asserted.
    """
    x = np.asarray(x, dtype=float).reshape(2)
    Ys = np.atleast_2d(np.asarray(probe_ys, dtype=float))
    ph = G.phi(Ys)
    ok = np.isfinite(ph)
    est = float(np.min(cost(x, Ys[ok]) - ph[ok])) if np.any(ok) else math.inf
    if G.contains(x, member_tol) and est < -member_tol:
        raise AssertionError(f"x on G but probe bound {est!r} < 0")
    return min(est, 0.0)
