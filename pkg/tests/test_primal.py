import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from bmot.closed_form import fixture_example2, fixture_example3, fixture_remark3
from bmot.dual import dual_solve, recover_G
from bmot.measures import DiscreteMeasure, Plan, discretize_gaussian
from bmot.primal import (
    SolveConfig,
    certify,
    classical_ot_check,
    first_order_check,
    monotone_marginal_check,
    noncrossing_all,
    primal_solve,
    solve,
    tangency_check,
)
from bmot.verification import random_instance, strategies

S = strategies()
NU2, PLAN2, PHI2, G2, PV2, MV2 = fixture_example2()
Z = np.array([[-1, -1], [1, 1]]) / 3


def test_primal_example2_grid():
    plan, v = primal_solve(NU2, np.vstack([Z, [[0, 0]]]))
    assert v == pytest.approx(-4 / 9, abs=1e-12)
    assert sorted(np.round(plan.mass * 6).astype(int).tolist()) == [1, 1, 2, 2]
    assert len(plan.x_atoms) == 2


def test_primal_mean_grid_is_product():
    nu = random_instance(5, 4)
    plan, v = primal_solve(nu, nu.mean[None])
    assert v == pytest.approx(nu.e_y1y2() - nu.mean[0] * nu.mean[1], abs=1e-12)


def test_primal_atoms_grid_is_identity():
    plan, v = primal_solve(NU2, NU2.atoms, append_mean=False)
    assert v == pytest.approx(0.0, abs=1e-12)
    assert plan == Plan.identity(NU2)
    # with the mean appended the product coupling takes over
    _, v = primal_solve(NU2, NU2.atoms)
    assert v == pytest.approx(-1 / 3, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_primal_matches_independent_lp(seed):
    nu = random_instance(3 + seed % 4, 100 + seed)
    grid = np.vstack([nu.atoms, np.random.default_rng(seed).uniform(-2, 2, (12, 2)), nu.mean])
    _, v = primal_solve(nu, grid)
    ref, _ = oracles.plan_lp(nu.atoms, nu.weights, grid)
    assert v == pytest.approx(ref, abs=1e-9)


def test_solve_example2():
    r = solve(NU2)
    assert r.certified and r.gap <= 1e-8
    assert r.primal_value == pytest.approx(-4 / 9, abs=1e-8)
    assert r.dual_value == pytest.approx(-4 / 9, abs=1e-8)


def test_solve_antidiagonal():
    nu, plan, G, value = fixture_remark3()
    r = solve(nu)
    assert r.certified and abs(r.gap) <= 1e-8
    assert r.primal_value == pytest.approx(-1.0, abs=1e-8)
    assert len(r.plan.x_atoms) == 1 and np.allclose(r.plan.x_atoms[0], [0, 0], atol=1e-12)


def test_solve_gaussian_20():
    r = solve(discretize_gaussian(1, 1, 0, 20))
    assert r.certified
    assert abs(r.primal_value + 0.5) <= 0.02


def test_solve_report_failure_flag():
    # a single refinement-free round on a hard instance still returns a report
    nu = random_instance(8, 11)
    r = solve(nu, config=SolveConfig(max_rounds=1, tol=1e-14))
    assert isinstance(r.converged, bool)
    assert r.gap >= -1e-8
    if r.gap > 1e-14:
        assert not r.converged and not r.certified


def test_first_order_examples():
    assert first_order_check(PLAN2, 1000, 0)
    nu = DiscreteMeasure([[0, 0], [1, 1], [2, 3]], np.full(3, 1 / 3))
    assert first_order_check(Plan.identity(nu), 1000, 0)
    X = PLAN2.x_atoms.copy()
    X[1] = [1.0, 0.0]
    assert not first_order_check(Plan(X, PLAN2.y_atoms, PLAN2.entries), 1000, 0)


def test_fixture_plans_certify():
    checks = certify(PLAN2, G2, NU2)
    assert all(checks.values()), checks
    nu, plan, G, _ = fixture_example3([-1, -0.5, 0.5, 1])
    r, m = plan.martingale_residuals()
    assert np.max(r) <= 1e-12
    assert tangency_check(plan, G, 1e-12)[0]


def test_classical_ot_routes_agree():
    # the transport LP and the c-transform bound on a certified plan
    r = solve(random_instance(6, 5))
    ok1, gap1, route1 = classical_ot_check(r.plan, lp_limit=10**9)
    ok2, gap2, route2 = classical_ot_check(r.plan, lp_limit=0)
    assert (route1, route2) == ("lp", "c-transform")
    assert ok1 and ok2


# properties on solved instances -------------------------------------


@given(st.integers(0, 10**6), st.integers(2, 7))
def test_solved_plan_properties(seed, n):
    nu = random_instance(n, seed)
    r = solve(nu)
    assert r.gap >= -1e-8
    assert noncrossing_all(r.plan)[0]
    assert monotone_marginal_check(r.plan)[0]
    # classical-optimality check against an LP that never touches the package kernel
    mass = r.plan.x_mass()
    ot = oracles.ot_lp(r.plan.x_atoms[mass > 0], mass[mass > 0], nu.atoms, nu.weights)
    assert r.primal_value <= ot + 1e-8 * (1 + abs(ot))


@given(st.integers(0, 10**6))
def test_primal_monotone_in_grid(seed):
    nu = random_instance(5, seed)
    rng = np.random.default_rng(seed)
    g1 = rng.uniform(-2, 2, (6, 2))
    g2 = np.vstack([g1, rng.uniform(-2, 2, (6, 2))])
    _, v1 = primal_solve(nu, g1)
    _, v2 = primal_solve(nu, g2)
    assert v2 <= v1 + 1e-10


@given(S["measures"](min_atoms=2, max_atoms=6))
def test_weak_duality_and_gap(nu):
    r = solve(nu)
    assert r.gap >= -1e-8
    assert r.gap <= 1e-8 and r.certified
