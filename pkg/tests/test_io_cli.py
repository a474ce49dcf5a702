import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmot import io
from bmot.cli import main, plot_data
from bmot.closed_form import fixture_example2, fixture_example3
from bmot.dual import dual_solve
from bmot.measures import Plan
from bmot.primal import solve
from bmot.verification import strategies

ST = strategies()


@pytest.fixture
def ex2(tmp_path):
    assert main(["fixtures", "--name", "example2", "--out", str(tmp_path / "ex2")]) == 0
    return tmp_path / "ex2"


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@given(st.floats(allow_nan=False))
def test_number_round_trip(x):
    v = io.loads(io.dumps({"v": x}))["v"]
    back = io._float(v, "v")
    assert back == x and math.copysign(1, back) == math.copysign(1, x)


@given(ST["measures"](max_atoms=8))
def test_measure_round_trip(nu):
    assert io.measure_from(io.loads(io.dumps(io.measure_doc(nu)))) == nu


def test_plan_graph_dual_round_trip():
    nu, plan, phi, G, *_ = fixture_example2()
    assert io.plan_from(io.loads(io.dumps(io.plan_doc(plan)))) == plan
    assert io.graph_from(io.loads(io.dumps(io.graph_doc(G)))) == G
    pv, value = dual_solve(nu)
    pv2, value2 = io.dual_from(io.loads(io.dumps(io.dual_doc(pv, value))))
    assert value2 == value and np.array_equal(pv2.phi, pv.phi)
    assert [tuple(a) for a in pv2.active_constraints] == [tuple(a) for a in pv.active_constraints]


def test_report_round_trip():
    nu, *_ = fixture_example2()
    r = solve(nu)
    doc = io.loads(io.dumps(io.report_doc(r)))
    plan, G, phi = io.report_from(doc)
    assert plan == r.plan and G == r.G and np.array_equal(phi, r.phi.phi)
    assert doc["primal_value"] == r.primal_value and doc["gap"] == r.gap


def test_infinities_are_strings():
    text = io.dumps({"a": [math.inf, -math.inf]})
    assert '"inf"' in text and '"-inf"' in text
    with pytest.raises(ValueError):
        io.dumps({"a": math.nan})


@pytest.mark.parametrize(
    "doc,field",
    [
        ({"type": "measure", "atoms": [[0, 0]], "weights": ["x"]}, "m.weights[0]"),
        ({"type": "measure", "atoms": [[0, 0, 1]], "weights": [1]}, "m.atoms[0]"),
        ({"type": "measure", "weights": [1]}, "m.atoms"),
        ({"type": "plan", "atoms": []}, "m.type"),
        ({"type": "measure", "atoms": [[0, 0]], "weights": [0.5]}, "m.weights"),
    ],
)
def test_field_level_diagnostics(doc, field):
    with pytest.raises(io.DocumentError) as e:
        io.measure_from(doc, where="m")
    assert e.value.field == field


def test_solve_example2(ex2, tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, _, _ = run(["solve", "--input", str(ex2 / "measure.json"), "--output", str(rep)], capsys)
    assert code == 0
    doc = io.read(rep)
    assert abs(doc["primal_value"] + 4 / 9) <= 1e-8 and abs(doc["dual_value"] + 4 / 9) <= 1e-8
    assert all(doc["certificates"].values())


def test_solve_is_byte_identical(ex2, tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"r{i}.json"
        assert main(["--seed", "3", "solve", "--input", str(ex2 / "measure.json"), "--output", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_map_and_dual(ex2, capsys):
    code, out, _ = run(["map", "--input", str(ex2 / "measure.json")], capsys)
    assert code == 0 and json.loads(out)["value"] == pytest.approx(-1 / 3, abs=1e-15)
    code, out, _ = run(["dual", "--input", str(ex2 / "measure.json")], capsys)
    assert code == 0 and json.loads(out)["value"] == pytest.approx(-4 / 9, abs=1e-8)


def test_verify_pass_and_perturbed(ex2, tmp_path, capsys):
    args = ["verify", "--plan", str(ex2 / "plan.json"), "--measure", str(ex2 / "measure.json"), "--graph", str(ex2 / "graph.json")]
    code, out, _ = run(args, capsys)
    assert code == 0 and "FAIL" not in out
    plan = io.plan_from(io.read(ex2 / "plan.json"))
    ent = np.column_stack([plan.k, plan.j, plan.mass])
    ent[0, 2] += 1e-3
    io.write(tmp_path / "bad.json", io.plan_doc(Plan(plan.x_atoms, plan.y_atoms, ent)))
    args[2] = str(tmp_path / "bad.json")
    code, out, err = run(args, capsys)
    assert code == 1
    assert "martingale: FAIL" in out and "martingale" in err


def test_exit_code_2_on_bad_document(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"type": "measure", "atoms": [[0, 0]], "weights": ["x"]}))
    code, _, err = run(["solve", "--input", str(p)], capsys)
    assert code == 2 and "weights[0]" in err
    code, _, err = run(["solve", "--input", str(tmp_path / "missing.json")], capsys)
    assert code == 2 and "file not found" in err
    p.write_text("{not json")
    assert run(["dual", "--input", str(p)], capsys)[0] == 2


def test_exit_code_2_on_oracle_guard(tmp_path, capsys):
    from bmot.verification import random_instance

    io.write(tmp_path / "m.json", io.measure_doc(random_instance(11, 0)))
    code, _, err = run(["map", "--input", str(tmp_path / "m.json")], capsys)
    assert code == 2 and "guard" in err


def test_exit_code_3(ex2, tmp_path, capsys):
    code, _, err = run(["equilibrium", "--input", str(ex2 / "measure.json")], capsys)
    assert code == 3 and "no map equilibrium" in err
    nu, *_ = fixture_example3([-1.0, -0.5, 0.5, 1.0])
    io.write(tmp_path / "m.json", io.measure_doc(nu))
    code, _, err = run(["solve", "--input", str(tmp_path / "m.json"), "--max-rounds", "0"], capsys)
    assert code in (0, 3)


def test_equilibrium_monotone(tmp_path, capsys):
    io.write(tmp_path / "m.json", {"type": "measure", "version": 1, "atoms": [[0, 0], [1, 1]], "weights": [0.5, 0.5]})
    code, out, _ = run(["equilibrium", "--input", str(tmp_path / "m.json")], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["total_profit"] == pytest.approx(0.0, abs=1e-12)
    assert [s["q"] for s in doc["states"]] == pytest.approx([0.0, 0.0], abs=1e-12)


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "remark3"])
def test_fixtures(name, tmp_path):
    assert main(["fixtures", "--name", name, "--out", str(tmp_path)]) == 0
    nu = io.measure_from(io.read(tmp_path / "measure.json"))
    io.graph_from(io.read(tmp_path / "graph.json"))
    assert io.read(tmp_path / "meta.json")["name"] == name
    if name != "example1":
        assert not io.plan_from(io.read(tmp_path / "plan.json")).check(nu, 1e-9)


def test_oracle_command(ex2, capsys):
    code, out, _ = run(["--seed", "1", "oracle", "--input", str(ex2 / "measure.json"), "--restarts", "50"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["value"] >= -4 / 9 - 1e-6 and doc["seed"] == 1


def test_plot_data(ex2, tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert main(["solve", "--input", str(ex2 / "measure.json"), "--output", str(rep)]) == 0
    code, out, _ = run(["plot-data", "--report", str(rep)], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["type"] == "plot-data"
    assert len(doc["segments"]) == 4
    assert sum(s["mass"] for s in doc["segments"]) == pytest.approx(1.0)
    # every hyperbola sample has cost equal to its level
    Y = io.read(rep)["plan"]["y_atoms"]
    for h in doc["hyperbolas"]:
        y = Y[h["atom"]]
        P = np.array(h["points"])
        np.testing.assert_allclose((P[:, 0] - y[0]) * (P[:, 1] - y[1]), h["level"], atol=1e-9)


def test_plot_data_function_shapes():
    nu, plan, phi, G, *_ = fixture_example2()
    d = plot_data(plan, G, phi, samples=10)
    assert d["graph"].shape[1] == 2 and len(d["hyperbolas"]) == 3
    assert all(h["points"].shape == (10, 2) for h in d["hyperbolas"])


def test_tolerance_env_and_flag_precedence(ex2, monkeypatch, capsys):
    m = str(ex2 / "measure.json")
    monkeypatch.setenv("BMOT_TOL", "not-a-number")
    code, _, err = run(["dual", "--input", m], capsys)
    assert code == 2 and "BMOT_TOL" in err
    # the flag wins, so the bad environment value is never read
    assert run(["--tol", "1e-8", "dual", "--input", m], capsys)[0] == 0
    assert run(["dual", "--tol", "1e-8", "--input", m], capsys)[0] == 0
    monkeypatch.setenv("BMOT_TOL", "1e-9")
    assert run(["dual", "--input", m], capsys)[0] == 0
    assert run(["--tol", "-1", "dual", "--input", m], capsys)[0] == 2
