import numpy as np
import pytest

from bmot.closed_form import (
    EllipticalSpec,
    elliptical_map,
    elliptical_solution,
    fixture_example2,
    fixture_example3,
    fixture_remark3,
)
from bmot.dual import dual_solve
from bmot.measures import discretize_gaussian
from bmot.measures import plan_value
from bmot.primal import certify, tangency_check

import oracles

# values of solve() on the 40x40 discretisation, frozen from scripts/freeze_oracles.py
GAUSS_40 = {(1.0, 1.0, 0.0): -0.4999999999999996, (1.0, 2.0, 0.0): -0.9999999999999992}


def test_spec_validation():
    with pytest.raises(ValueError):
        EllipticalSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        EllipticalSpec(1.0, 1.0, 1.5)
    assert EllipticalSpec(1.0, 2.0, -2.0).rho == -1.0


def test_elliptical_standard():
    lam, A, G, value = elliptical_solution(EllipticalSpec(1.0, 1.0, 0.0))
    assert lam == 1.0 and value == -0.5
    np.testing.assert_allclose(A, [[0.5, 0.5], [0.5, 0.5]])
    assert G.contains([2.0, 2.0]) and not G.contains([2.0, 1.0])


def test_elliptical_sigma2():
    lam, A, _, value = elliptical_solution(EllipticalSpec(1.0, 2.0, 0.0))
    assert lam == 2.0 and value == -1.0
    x = elliptical_map(EllipticalSpec(1.0, 2.0), [[1.0, 2.0]])[0]
    assert x[1] == pytest.approx(lam * x[0])


def test_elliptical_comonotone_zero():
    assert elliptical_solution(EllipticalSpec(1.0, 3.0, 3.0))[3] == 0.0


@pytest.mark.parametrize("s1,s2", [(1.0, 1.0), (1.0, 2.0)])
def test_elliptical_value_matches_frozen_discretisation(s1, s2):
    value = elliptical_solution(EllipticalSpec(s1, s2))[3]
    assert abs(value / GAUSS_40[(s1, s2, 0.0)] - 1) <= 0.02


@pytest.mark.parametrize("s1,s2,rho", [(1, 1, 0), (1, 2, 0), (1, 1, 0.5)])
def test_binned_conditional_expectation(s1, s2, rho):
    spec = EllipticalSpec(s1, s2, rho * s1 * s2)
    nu = discretize_gaussian(s1, s2, rho, 40)
    X = elliptical_map(spec, nu.atoms)
    # bin on X1 by weighted quantiles; compare E[Y | bin] with E[X | bin]
    # atoms with equal X1 share a bin, indexed by the weight strictly below them
    o = np.argsort(X[:, 0], kind="stable")
    x1 = X[o, 0]
    start = np.concatenate([[True], np.diff(x1) > 1e-12])
    below = np.cumsum(nu.weights[o]) - nu.weights[o]
    below = np.maximum.accumulate(np.where(start, below, 0.0))
    bins = np.minimum((below * 20).astype(int), 19)
    worst = 0.0
    for b in range(20):
        s = o[bins == b]
        w = nu.weights[s]
        if w.sum() == 0:
            continue
        dev = np.abs(w @ nu.atoms[s] / w.sum() - w @ X[s] / w.sum()).max()
        worst = max(worst, dev)
    assert worst <= 0.05


def test_example2_fixture():
    nu, plan, phi, G, pv, mv = fixture_example2()
    assert pv == -4 / 9 and mv == -1 / 3
    assert plan_value(plan) == pytest.approx(-4 / 9, abs=1e-15)
    np.testing.assert_allclose(2 / 3 * nu.atoms[1] + 1 / 3 * nu.atoms[0], [-1 / 3, -1 / 3])
    assert not plan.check(nu, 1e-12)
    assert all(certify(plan, G, nu).values())
    np.testing.assert_allclose(G.phi(nu.atoms), phi, atol=1e-9)


@pytest.mark.parametrize("u", [[-1.0, 1.0], [-1.0, -0.5, 0.5, 1.0], [-2.0, -0.3, 0.3, 2.0]])
def test_example3_fixture(u):
    nu, plan, G, value = fixture_example3(u)
    assert value == pytest.approx(oracles.example3_pointwise(u), abs=1e-14)
    assert plan_value(plan) == pytest.approx(value, abs=1e-12)
    assert not plan.check(nu, 1e-12)
    assert tangency_check(plan, G, 1e-12)[0]
    _, dv = dual_solve(nu)
    assert dv == pytest.approx(value, abs=1e-6)


def test_example3_values():
    assert fixture_example3([-1.0, 1.0])[3] == pytest.approx(-4 / 3)
    assert fixture_example3([-1.0, -0.5, 0.5, 1.0])[3] == pytest.approx(-5 / 6)


@pytest.mark.parametrize("u", [[1.0], [-1.0, 2.0], [0.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0]])
def test_example3_rejects(u):
    with pytest.raises(ValueError):
        fixture_example3(u)


def test_antidiagonal_fixture():
    nu, plan, G, value = fixture_remark3(1.5)
    assert value == -2.25 and plan_value(plan) == pytest.approx(-2.25)
    assert not plan.check(nu, 1e-12)
    assert dual_solve(nu)[1] == pytest.approx(-2.25, abs=1e-9)
