import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmot.measures import (
    DiscreteMeasure,
    Plan,
    PlanInvalid,
    convex_order_feasible,
    cost,
    discretize_gaussian,
    plan_value,
    plan_value_forms,
)
from bmot.closed_form import fixture_example2
from bmot.verification import strategies

S = strategies()


def test_cost_values():
    assert cost([0, 0], [0, 0]) == 0
    assert cost([-1 / 3, -1 / 3], [0, -1]) == pytest.approx(-2 / 9, abs=1e-15)
    assert cost([1 / 3, 1 / 3], [-1, 1]) == pytest.approx(-8 / 9, abs=1e-15)


def test_cost_is_exact_product():
    x, y = np.array([0.1, 0.7]), np.array([0.3, -0.2])
    assert cost(x, y) == (x[0] - y[0]) * (x[1] - y[1])


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([[0, 0]], [0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0, 0], [1, 1]], [1.0, 0.0])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0, np.nan]], [1.0])


def test_duplicates_merged():
    nu = DiscreteMeasure([[0, 0], [1, 2], [0, 0]], [0.25, 0.5, 0.25])
    assert len(nu) == 2
    np.testing.assert_allclose(nu.weights, [0.5, 0.5])


@given(S["measures"](max_atoms=5), st.integers(1, 3))
def test_merging_preserves_moments(nu, reps):
    atoms = np.repeat(nu.atoms, reps, axis=0)
    w = np.repeat(nu.weights, reps) / reps
    mu = DiscreteMeasure(atoms, w)
    assert len(mu) == len(nu)
    for p in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]:
        assert abs(mu.moment(*p) - nu.moment(*p)) <= 1e-12


def test_plan_value_example2():
    nu, plan, *_ = fixture_example2()
    assert plan_value(plan, nu) == pytest.approx(-4 / 9, abs=1e-15)


def test_plan_value_identity_and_antidiagonal():
    nu = DiscreteMeasure([[0, 1], [2, -1], [3, 3]], [0.2, 0.3, 0.5])
    assert plan_value(Plan.identity(nu), nu) == 0
    nu = DiscreteMeasure([[-1, 1], [1, -1]], [0.5, 0.5])
    plan = Plan([[0, 0]], nu.atoms, [[0, 0, 0.5], [0, 1, 0.5]])
    assert plan_value(plan, nu) == pytest.approx(-1.0)


def test_plan_value_rejects_invalid():
    nu, plan, *_ = fixture_example2()
    bad = Plan(plan.x_atoms + [[0.01, 0.0]], plan.y_atoms, plan.entries)
    with pytest.raises(PlanInvalid):
        plan_value(bad, nu)
    with pytest.raises(PlanInvalid):
        Plan([[0, 0]], [[0, 0]], [[0, 0, -1.0]])


@given(S["measures"](min_atoms=2, max_atoms=5))
def test_value_forms_agree_on_martingale_plans(nu):
    # mean coupling plus the identity, mixed: always a martingale plan
    n = len(nu)
    X = np.vstack([nu.mean, nu.atoms])
    ent = [[0, j, 0.5 * nu.weights[j]] for j in range(n)] + [[1 + j, j, 0.5 * nu.weights[j]] for j in range(n)]
    plan = Plan(X, nu.atoms, ent)
    a, b = plan_value_forms(plan)
    assert abs(a - b) <= 1e-8


def test_convex_order_examples():
    nu = DiscreteMeasure([[-1, 1], [0, -1], [1, 0]], np.full(3, 1 / 3))
    ok, w = convex_order_feasible(DiscreteMeasure.dirac(nu.mean), nu)
    assert ok and not w.check(nu)
    ok, w = convex_order_feasible(nu, nu)
    assert ok and not w.check(nu)
    ok, w = convex_order_feasible(DiscreteMeasure.dirac([1, 0]), DiscreteMeasure.dirac([0, 0]))
    assert not ok and w is None


@given(S["measures"](min_atoms=2, max_atoms=4), st.floats(1e-9, 1e-2), st.floats(1.0, 100.0))
def test_convex_order_monotone_in_tol(nu, tol, factor):
    # the mean nudged off: feasible only for a large enough tolerance
    mu = DiscreteMeasure.dirac(nu.mean + [1e-4, 0.0])
    ok_small, _ = convex_order_feasible(mu, nu, tol)
    ok_big, _ = convex_order_feasible(mu, nu, tol * factor)
    assert ok_big or not ok_small


def test_discretize_gaussian():
    nu = discretize_gaussian(1, 1, 0, 2)
    assert len(nu) == 4 and np.max(np.abs(nu.mean)) <= 1e-10
    nu = discretize_gaussian(1, 1, 0, 20)
    assert abs(nu.e_y1y2()) <= 0.02
    nu = discretize_gaussian(1, 2, 0.5, 20)
    assert abs(nu.e_y1y2() - 1.0) <= 0.05
    with pytest.raises(ValueError):
        discretize_gaussian(1, 1, 1.0, 4)
