import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from bmot.closed_form import fixture_example2, fixture_example3
from bmot.dual import (
    DualConfig,
    NotConverged,
    PotentialValues,
    RecoveryError,
    dual_solve,
    recover_G,
    tangency_candidates,
)
from bmot.geometry import MonotoneGraph, check_admissible
from bmot.measures import DiscreteMeasure, Plan, discretize_gaussian, plan_value
from bmot.oracle import plan_search
from bmot.verification import random_instance, strategies

S = strategies()
LP_ONLY = DualConfig(polish_first=False, polish=False)


def test_example2_dual():
    nu = fixture_example2()[0]
    pv, v = dual_solve(nu)
    assert v == pytest.approx(-4 / 9, abs=1e-12)
    np.testing.assert_allclose(pv.phi, [-8 / 9, -2 / 9, -2 / 9], atol=1e-12)
    assert pv.admissible and check_admissible(pv, nu)[0]
    # the cut LP route on its own
    pv2, v2 = dual_solve(nu, config=LP_ONLY)
    assert v2 == pytest.approx(-4 / 9, abs=1e-8)


def test_dirac_and_antidiagonal():
    pv, v = dual_solve(DiscreteMeasure.dirac([0.3, -2]))
    assert v == 0 and np.array_equal(pv.phi, [0.0])
    nu = DiscreteMeasure([[-1, 1], [1, -1]], [0.5, 0.5])
    pv, v = dual_solve(nu)
    assert v == pytest.approx(-1.0, abs=1e-12)
    # brute-force plan oracle agrees
    assert plan_search(nu)[1] == pytest.approx(-1.0, abs=1e-9)


def test_not_converged_is_explicit():
    nu = random_instance(8, 3)
    cfg = DualConfig(polish=False, polish_first=False, max_rounds=1, seed_slack=0.0)
    with pytest.raises(NotConverged) as e:
        dual_solve(nu, config=cfg)
    assert e.value.bound is not None


@pytest.mark.parametrize("seed", range(12))
def test_dual_routes_agree_with_grid_oracle(seed):
    nu = random_instance(3 + seed % 6, seed)
    _, a = dual_solve(nu)
    _, b = dual_solve(nu, config=LP_ONLY)
    g, _ = oracles.dual_lp_grid(nu.atoms, nu.weights, 400)
    assert abs(a - b) <= 1e-6
    # the grid relaxation is an upper bound that tightens with the grid
    assert a <= g + 1e-12 and g - a <= 1e-4


def test_recover_example2():
    nu = fixture_example2()[0]
    pv, _ = dual_solve(nu)
    G = recover_G(nu, pv)
    for z in (np.array([-1, -1]) / 3, np.array([1, 1]) / 3):
        assert G.contains(z, 1e-4)
    np.testing.assert_allclose(G.phi(nu.atoms), pv.phi, atol=1e-6)


def test_recover_zero_potential_is_identity_like():
    nu = DiscreteMeasure([[0, 0], [1, 1], [2, 2]], np.full(3, 1 / 3))
    pv, v = dual_solve(nu)
    assert v == 0 and np.all(pv.phi == 0)
    G = recover_G(nu, pv)
    assert np.all(G.phi(nu.atoms) == 0)
    assert G == MonotoneGraph.identity() or np.all(np.abs(G.phi(nu.atoms)) <= 1e-12)


def test_recover_rejects_inconsistent_potentials():
    nu = fixture_example2()[0]
    # admissible but not dual-attained by any G: phi_G at y0 cannot stay this low
    with pytest.raises(RecoveryError):
        recover_G(nu, PotentialValues([-8 / 9, -2 / 9, -5.0]), check_tol=1e-9)


def test_recover_example3_two_lines():
    u = [-1, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1]
    nu, plan, _, value = fixture_example3(u)
    pv, v = dual_solve(nu)
    assert v == pytest.approx(value, abs=1e-6)
    G = recover_G(nu, pv)
    box = oracles.support_box(plan.x_atoms)
    d = oracles.box_hausdorff(G, oracles.two_lines_in_box(box), oracles.dist_to_two_lines, box, h=1e-5)
    assert d <= 1e-3


def test_tangency_candidates_example2():
    nu = fixture_example2()[0]
    pv, _ = dual_solve(nu)
    G = recover_G(nu, pv)
    C = tangency_candidates(nu, pv, G, tol=1e-6)
    for z in (np.array([-1, -1]) / 3, np.array([1, 1]) / 3):
        assert np.min(np.hypot(*(C - z).T)) <= 1e-4


def test_tangency_candidates_monotone():
    nu = DiscreteMeasure([[0, 0], [1, 2], [3, 3]], np.full(3, 1 / 3))
    pv, _ = dual_solve(nu)
    C = tangency_candidates(nu, pv, recover_G(nu, pv), tol=1e-6)
    for y in nu.atoms:
        assert np.min(np.hypot(*(C - y).T)) <= 1e-12


def test_tangency_candidates_gaussian():
    nu = discretize_gaussian(1, 1, 0, 20)
    pv, _ = dual_solve(nu)
    C = tangency_candidates(nu, pv, recover_G(nu, pv), tol=1e-6)
    assert np.max(oracles.dist_to_line(1.0)(C)) <= 2e-2


# properties ---------------------------------------------------------


@given(S["measures"](min_atoms=1, max_atoms=6), st.integers(0, 10**6))
def test_weak_duality_against_feasible_plans(nu, seed):
    _, v = dual_solve(nu)
    rng = np.random.default_rng(seed)
    # mixtures of identity and barycentre clusters are martingale plans
    n = len(nu)
    lab = rng.integers(0, max(1, n // 2), n)
    X, ent = [], []
    for b in np.unique(lab):
        sel = np.flatnonzero(lab == b)
        X.append(nu.weights[sel] @ nu.atoms[sel] / nu.weights[sel].sum())
        ent += [[len(X) - 1, j, nu.weights[j]] for j in sel]
    plan = Plan(np.array(X), nu.atoms, ent)
    assert v <= plan_value(plan, nu) + 1e-8


@given(S["measures"](min_atoms=2, max_atoms=7), st.randoms(use_true_random=False))
def test_permutation_invariance(nu, r):
    perm = list(range(len(nu)))
    r.shuffle(perm)
    _, a = dual_solve(nu)
    _, b = dual_solve(nu.permuted(perm))
    assert abs(a - b) <= 1e-9


@given(S["monotone_measures"]())
def test_monotone_support_is_zero(nu):
    pv, v = dual_solve(nu)
    assert v == 0 and np.all(pv.phi == 0)


@pytest.mark.parametrize("n", [20, 60, 200])
def test_terminates_up_to_200_atoms(n):
    nu = random_instance(n, n)
    pv, v = dual_solve(nu)
    assert pv.admissible and np.isfinite(v)
