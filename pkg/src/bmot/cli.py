"""Command-line interface.

Exit codes: 0 success, 1 a verification check failed, 2 malformed document
or oracle guard, 3 solver failure (including a missing map equilibrium).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .closed_form import (
    FIXTURES,
    fixture_example1,
    fixture_example2,
    fixture_example3,
    fixture_remark3,
)
from .dual import DualConfig, NotConverged, RecoveryError, dual_solve
from .equilibrium import NoMapEquilibrium, extract_equilibrium
from .geometry import EnvelopeError
from .oracle import MAX_PLAN_ATOMS, OracleGuard, map_solve_exact, plan_search
from .primal import SolveConfig, certify, solve

log = logging.getLogger("bmot")

DEFAULT_TOL = 1e-8
EXIT_OK, EXIT_CHECK, EXIT_DOC, EXIT_SOLVER = 0, 1, 2, 3


class _Failure(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _default_tol():
    raw = os.environ.get("BMOT_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        v = float(raw)
    except ValueError:
        raise _Failure(EXIT_DOC, f"BMOT_TOL: not a number ({raw!r})") from None
    if not v > 0:
        raise _Failure(EXIT_DOC, "BMOT_TOL: must be positive")
    return v


def _emit(doc, path):
    text = io.dumps(doc)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _measure(path):
    return io.measure_from(io.read(path), where=str(path))


def _config(args):
    return SolveConfig(tol=args.tol, max_rounds=args.max_rounds, seed=args.seed)


def _solve_or_fail(nu, args):
    try:
        return solve(nu, config=_config(args))
    except (NotConverged, RecoveryError, EnvelopeError) as exc:
        raise _Failure(EXIT_SOLVER, f"solver failure ({type(exc).__name__}): {exc}") from None


# subcommands ---------------------------------------------------------


def cmd_solve(args):
    nu = _measure(args.input)
    r = _solve_or_fail(nu, args)
    _emit(io.report_doc(r), args.output)
    if not r.converged:
        raise _Failure(EXIT_SOLVER, f"not converged: gap {r.gap:.3e} > tol {args.tol:g}")
    failed = [k for k, ok in r.certificate_checks.items() if not ok]
    if failed:
        raise _Failure(EXIT_CHECK, "certificate checks failed: " + ", ".join(failed))
    log.info("primal %.17g dual %.17g gap %.3e", r.primal_value, r.dual_value, r.gap)
    return EXIT_OK


def cmd_dual(args):
    nu = _measure(args.input)
    try:
        pv, value = dual_solve(nu, config=DualConfig(tol=min(args.tol, 1e-9)))
    except NotConverged as exc:
        raise _Failure(EXIT_SOLVER, f"dual not converged: {exc}") from None
    _emit(io.dual_doc(pv, value), args.output)
    return EXIT_OK


def cmd_map(args):
    nu = _measure(args.input)
    X, value, labels = map_solve_exact(nu)
    _emit(io.map_doc(X, value, labels), args.output)
    return EXIT_OK


def cmd_equilibrium(args):
    nu = _measure(args.input)
    r = _solve_or_fail(nu, args)
    try:
        out = extract_equilibrium(r)
    except NoMapEquilibrium as exc:
        raise _Failure(EXIT_SOLVER, f"no map equilibrium: {exc}") from None
    except ValueError as exc:
        raise _Failure(EXIT_SOLVER, str(exc)) from None
    _emit(io.equilibrium_doc(out), args.output)
    return EXIT_OK


def cmd_verify(args):
    nu = _measure(args.measure)
    plan = io.plan_from(io.read(args.plan), where=str(args.plan))
    G = io.graph_from(io.read(args.graph), where=str(args.graph))
    checks = certify(plan, G, nu, tol=args.tol, seed=args.seed)
    for k, ok in checks.items():
        print(f"{k}: {'pass' if ok else 'FAIL'}")
    failed = [k for k, ok in checks.items() if not ok]
    if failed:
        msgs = plan.check(nu, 1e-8)
        for m in msgs:
            print(f"  martingale: {m}", file=sys.stderr)
        raise _Failure(EXIT_CHECK, "failed checks: " + ", ".join(failed))
    return EXIT_OK


def cmd_oracle(args):
    nu = _measure(args.input)
    plan, value = plan_search(nu, restarts=args.restarts, rng_seed=args.seed, max_atoms=args.max_atoms)
    doc = {"type": "oracle", "version": io.FORMAT_VERSION, "restarts": args.restarts, "seed": args.seed, "value": value}
    doc["plan"] = io.plan_doc(plan)
    _emit(doc, args.output)
    return EXIT_OK


def cmd_fixtures(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"type": "fixture", "version": io.FORMAT_VERSION, "name": args.name}
    if args.name == "example1":
        nu, spec, G, value = fixture_example1()
        meta.update(sigma1=spec.sigma1, sigma2=spec.sigma2, cov12=spec.cov12, value=value)
        plan = None
    elif args.name == "example2":
        nu, plan, phi, G, pval, mval = fixture_example2()
        meta.update(plan_value=pval, map_value=mval, phi=phi)
    elif args.name == "example3":
        nu, plan, G, value = fixture_example3([-1.0, -0.5, 0.5, 1.0])
        meta.update(value=value)
    else:
        nu, plan, G, value = fixture_remark3()
        meta.update(value=value)
    io.write(out / "measure.json", io.measure_doc(nu))
    io.write(out / "graph.json", io.graph_doc(G))
    if plan is not None:
        io.write(out / "plan.json", io.plan_doc(plan))
    io.write(out / "meta.json", meta)
    return EXIT_OK


def plot_data(plan, G, phi=None, samples=64, span=None):
    """Data for external plotting: G polyline, support segments and tangent hyperbolas."""
    x, y, m = plan.support_pairs()
    pts = np.vstack([x, y, G.vertices])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(np.max(hi - lo)) + 1.0 if span is None else float(span)
    V = G.vertices
    poly = np.vstack([V[0] - span * G.left_ray, V, V[-1] + span * G.right_ray])
    segs = [{"x": a, "y": b, "mass": float(w)} for a, b, w in zip(x, y, m)]
    hyp = []
    Y = plan.y_atoms
    levels = G.phi(Y) if phi is None else np.asarray(phi, dtype=float)
    for j, (yj, lev) in enumerate(zip(Y, levels)):
        sel = plan.j == j
        if lev >= 0 or not np.any(sel):
            continue
        # branch of the first support x-atom of this y-atom
        xk = plan.x_atoms[plan.k[sel][0]]
        s0 = xk[0] - yj[0]
        if abs(s0) < 1e-12:
            continue
        s = np.sign(s0) * np.geomspace(abs(s0) / 4, abs(s0) * 4, samples)
        curve = np.column_stack([yj[0] + s, yj[1] + lev / s])
        hyp.append({"atom": j, "level": float(lev), "points": curve})
    return {"type": "plot-data", "version": io.FORMAT_VERSION, "graph": poly, "segments": segs, "hyperbolas": hyp}


def cmd_plot_data(args):
    doc = io.read(args.report)
    plan, G, phi = io.report_from(doc, where=str(args.report))
    if G is None:
        raise _Failure(EXIT_DOC, f"{args.report}.graph: missing")
    _emit(plot_data(plan, G), args.out)
    return EXIT_OK


# parser --------------------------------------------------------------


def _globals(p, suppress):
    d = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=d if suppress else 0, help="seed for all randomized paths")
    p.add_argument("--tol", type=float, default=d if suppress else None, help="tolerance (default 1e-8, env BMOT_TOL)")
    p.add_argument("--log-level", default=d if suppress else "WARNING", help="logging level")


def build_parser():
    p = argparse.ArgumentParser(prog="bmot", description="Backward martingale transport with covariance cost.")
    _globals(p, False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        s = sub.add_parser(name, help=help)
        _globals(s, True)
        s.set_defaults(fn=fn)
        return s

    s = add("solve", cmd_solve, "full pipeline, writes a report document")
    s.add_argument("--input", required=True)
    s.add_argument("--max-rounds", type=int, default=5)
    s.add_argument("--output", default="-")
    s = add("dual", cmd_dual, "pairwise dual LP, writes a dual document")
    s.add_argument("--input", required=True)
    s.add_argument("--output", default="-")
    s = add("map", cmd_map, "exact map oracle (at most 10 atoms)")
    s.add_argument("--input", required=True)
    s.add_argument("--output", default="-")
    s = add("equilibrium", cmd_equilibrium, "insider equilibrium from the solved plan")
    s.add_argument("--input", required=True)
    s.add_argument("--max-rounds", type=int, default=5)
    s.add_argument("--output", default="-")
    s = add("verify", cmd_verify, "certificate checks for a plan, measure and graph")
    s.add_argument("--plan", required=True)
    s.add_argument("--measure", required=True)
    s.add_argument("--graph", required=True)
    s = add("oracle", cmd_oracle, "plan local-search oracle")
    s.add_argument("--input", required=True)
    s.add_argument("--restarts", type=int, default=200)
    s.add_argument("--max-atoms", type=int, default=MAX_PLAN_ATOMS)
    s.add_argument("--output", default="-")
    s = add("fixtures", cmd_fixtures, "write fixture documents")
    s.add_argument("--name", required=True, choices=FIXTURES)
    s.add_argument("--out", required=True)
    s = add("plot-data", cmd_plot_data, "plotting data from a report")
    s.add_argument("--report", required=True)
    s.add_argument("--out", default="-")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=str(args.log_level).upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.tol is None:
            args.tol = _default_tol()
        if not args.tol > 0:
            raise _Failure(EXIT_DOC, "--tol must be positive")
        return args.fn(args)
    except _Failure as exc:
        print(f"bmot {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (io.DocumentError, OracleGuard) as exc:
        print(f"bmot {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOC


if __name__ == "__main__":
    sys.exit(main())
