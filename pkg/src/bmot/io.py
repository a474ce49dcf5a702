"""JSON documents for measures, plans, graphs, reports and equilibria.

Floats are written with 17 significant digits so every double round-trips;
infinities are the strings "inf" and "-inf".  Keys keep insertion order and
the output is deterministic for equal inputs.  Parsing errors name the
offending field.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .dual import PotentialValues
from .geometry import MonotoneGraph
from .measures import DiscreteMeasure, Plan

__all__ = [
    "DocumentError",
    "dumps",
    "loads",
    "write",
    "read",
    "measure_doc",
    "measure_from",
    "plan_doc",
    "plan_from",
    "graph_doc",
    "graph_from",
    "dual_doc",
    "dual_from",
    "report_doc",
    "report_from",
    "equilibrium_doc",
    "map_doc",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


class DocumentError(ValueError):
    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field


# serialisation -------------------------------------------------------


def _num(x):
    x = float(x)
    if math.isnan(x):
        raise ValueError("NaN cannot be serialised")
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if x == 0:
        return "0.0" if math.copysign(1.0, x) > 0 else "-0.0"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _dump(o, indent, level):
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = "," if indent is None else ","
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in o.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(o, np.ndarray):
        o = o.tolist()
    if isinstance(o, (list, tuple)):
        if not o:
            return "[]"
        # flat numeric rows stay on one line
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in o):
            return "[" + ", ".join(_dump(v, None, 0) for v in o) + "]"
        items = [f"{pad}{_dump(v, indent, level + 1)}" for v in o]
        return "[" + sep.join(items) + end + "]"
    if isinstance(o, (bool, np.bool_)):
        return "true" if o else "false"
    if isinstance(o, (int, np.integer)):
        return str(int(o))
    if isinstance(o, (float, np.floating)):
        return _num(o)
    if o is None:
        return "null"
    if isinstance(o, str):
        return json.dumps(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(doc, indent=1):
    return _dump(doc, indent, 0) + "\n"


def loads(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError("<document>", f"invalid JSON ({exc})") from None


def write(path, doc):
    Path(path).write_text(dumps(doc))


def read(path):
    p = Path(path)
    if not p.exists():
        raise DocumentError(str(path), "file not found")
    return loads(p.read_text())


# field helpers -------------------------------------------------------


def _get(doc, key, where):
    if not isinstance(doc, dict):
        raise DocumentError(where, "expected an object")
    if key not in doc:
        raise DocumentError(f"{where}.{key}", "missing")
    return doc[key]


def _float(v, field):
    if isinstance(v, str) and v in ("inf", "-inf"):
        return math.inf if v == "inf" else -math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DocumentError(field, f"expected a number, got {v!r}")
    return float(v)


def _floats(v, field):
    if not isinstance(v, list):
        raise DocumentError(field, "expected a list of numbers")
    return np.array([_float(x, f"{field}[{i}]") for i, x in enumerate(v)], dtype=float)


def _points(v, field):
    if not isinstance(v, list):
        raise DocumentError(field, "expected a list of points")
    out = []
    for i, p in enumerate(v):
        if not isinstance(p, list) or len(p) != 2:
            raise DocumentError(f"{field}[{i}]", "expected a point [x1, x2]")
        out.append([_float(p[0], f"{field}[{i}][0]"), _float(p[1], f"{field}[{i}][1]")])
    return np.array(out, dtype=float).reshape(-1, 2)


def _check_type(doc, kind, where):
    t = _get(doc, "type", where)
    if t != kind:
        raise DocumentError(f"{where}.type", f"expected {kind!r}, got {t!r}")


# documents -----------------------------------------------------------


def measure_doc(nu):
    return {"type": "measure", "version": FORMAT_VERSION, "atoms": nu.atoms, "weights": nu.weights}


def measure_from(doc, where="measure"):
    _check_type(doc, "measure", where)
    atoms = _points(_get(doc, "atoms", where), f"{where}.atoms")
    weights = _floats(_get(doc, "weights", where), f"{where}.weights")
    if len(atoms) != len(weights):
        raise DocumentError(f"{where}.weights", f"{len(weights)} weights for {len(atoms)} atoms")
    try:
        return DiscreteMeasure(atoms, weights)
    except ValueError as exc:
        raise DocumentError(f"{where}.weights", str(exc)) from None


def plan_doc(plan):
    entries = [[int(k), int(j), float(m)] for k, j, m in zip(plan.k, plan.j, plan.mass)]
    return {"type": "plan", "version": FORMAT_VERSION, "x_atoms": plan.x_atoms, "y_atoms": plan.y_atoms, "entries": entries}


def plan_from(doc, where="plan"):
    _check_type(doc, "plan", where)
    X = _points(_get(doc, "x_atoms", where), f"{where}.x_atoms")
    Y = _points(_get(doc, "y_atoms", where), f"{where}.y_atoms")
    raw = _get(doc, "entries", where)
    if not isinstance(raw, list):
        raise DocumentError(f"{where}.entries", "expected a list of [k, j, mass]")
    ent = []
    for i, e in enumerate(raw):
        f = f"{where}.entries[{i}]"
        if not isinstance(e, list) or len(e) != 3:
            raise DocumentError(f, "expected [k, j, mass]")
        for n, v in zip("kj", e[:2]):
            if isinstance(v, bool) or not isinstance(v, int):
                raise DocumentError(f, f"index {n} must be an integer")
        ent.append([e[0], e[1], _float(e[2], f + "[2]")])
    try:
        return Plan(X, Y, np.array(ent, dtype=float).reshape(-1, 3))
    except ValueError as exc:
        raise DocumentError(f"{where}.entries", str(exc)) from None


def graph_doc(G):
    return {"type": "graph", "version": FORMAT_VERSION, "vertices": G.vertices, "left_ray": G.left_ray, "right_ray": G.right_ray}


def graph_from(doc, where="graph"):
    _check_type(doc, "graph", where)
    V = _points(_get(doc, "vertices", where), f"{where}.vertices")
    lr = _floats(_get(doc, "left_ray", where), f"{where}.left_ray")
    rr = _floats(_get(doc, "right_ray", where), f"{where}.right_ray")
    try:
        return MonotoneGraph(V, lr, rr)
    except ValueError as exc:
        raise DocumentError(where, str(exc)) from None


def dual_doc(pv, value):
    return {
        "type": "dual",
        "version": FORMAT_VERSION,
        "phi": pv.phi,
        "value": float(value),
        "bound": float(pv.bound),
        "admissible": bool(pv.admissible),
        "active": [[int(i), int(j), float(t)] for i, j, t in pv.active_constraints],
    }


def dual_from(doc, where="dual"):
    _check_type(doc, "dual", where)
    phi = _floats(_get(doc, "phi", where), f"{where}.phi")
    active = [(int(a), int(b), _float(t, f"{where}.active[{i}][2]")) for i, (a, b, t) in enumerate(_get(doc, "active", where))]
    pv = PotentialValues(phi, active, bool(_get(doc, "admissible", where)), _float(_get(doc, "bound", where), f"{where}.bound"))
    return pv, _float(_get(doc, "value", where), f"{where}.value")


def report_doc(report):
    doc = {
        "type": "report",
        "version": FORMAT_VERSION,
        "primal_value": report.primal_value,
        "dual_value": report.dual_value,
        "gap": report.gap,
        "iterations": int(report.iterations),
        "converged": bool(report.converged),
        "certificates": {k: bool(v) for k, v in report.certificate_checks.items()},
        "plan": plan_doc(report.plan),
    }
    if report.phi is not None:
        doc["phi"] = report.phi.phi
    if report.G is not None:
        doc["graph"] = graph_doc(report.G)
    return doc


def report_from(doc, where="report"):
    """Plan, graph and phi of a report document (the numbers stay as parsed)."""
    _check_type(doc, "report", where)
    plan = plan_from(_get(doc, "plan", where), f"{where}.plan")
    G = graph_from(doc["graph"], f"{where}.graph") if "graph" in doc else None
    phi = _floats(doc["phi"], f"{where}.phi") if "phi" in doc else None
    return plan, G, phi


def equilibrium_doc(out):
    G = out.pricing_rule.graph
    lo, hi = out.pricing_rule.domain
    return {
        "type": "equilibrium",
        "version": FORMAT_VERSION,
        "pricing_rule": {
            "breakpoints": out.pricing_rule.breakpoints,
            "left_ray": G.left_ray,
            "right_ray": G.right_ray,
            "domain": [lo, hi],
        },
        "states": out.states(),
        "total_profit": out.total_profit,
    }


def map_doc(X, value, labels):
    return {"type": "map", "version": FORMAT_VERSION, "x": X, "labels": [int(v) for v in labels], "value": float(value)}
