import dataclasses

import numpy as np
import pytest

from bmot.closed_form import fixture_example2
from bmot.equilibrium import (
    NoMapEquilibrium,
    PricingRule,
    extract_equilibrium,
    profit_table,
    verify_best_response,
    verify_efficiency,
)
from bmot.geometry import MonotoneGraph
from bmot.measures import DiscreteMeasure, discretize_gaussian
from bmot.primal import solve


@pytest.fixture(scope="module")
def gauss():
    nu = discretize_gaussian(1.0, 1.0, 0.0, 20)
    r = solve(nu)
    return nu, r, extract_equilibrium(r)


def test_gaussian_identities(gauss):
    nu, r, out = gauss
    bp = out.pricing_rule.breakpoints
    assert np.max(np.abs(bp[:, 1] - bp[:, 0])) <= 1e-6
    np.testing.assert_allclose(out.profit, (out.v - out.u) ** 2 / 4, atol=1e-8)
    np.testing.assert_allclose(out.q, (out.v - out.u) / 2, atol=1e-8)
    np.testing.assert_allclose(out.pricing_rule(out.r), out.s, atol=1e-9)
    assert verify_efficiency(out, nu) <= 1e-8
    assert verify_best_response(out, np.linspace(-10, 10, 10_000))
    assert out.total_profit == pytest.approx(-r.dual_value, abs=1e-8)
    assert np.all(out.profit >= -1e-12)


def test_pricing_rule_monotone_with_infinite_extension():
    f = PricingRule(MonotoneGraph([[0.0, 0.0], [1.0, 2.0]], [0.0, 1.0], [0.0, 1.0]))
    r = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    v = f(r)
    # the vertical left ray makes f(0) = inf of an unbounded-below section
    np.testing.assert_array_equal(v, [-np.inf, -np.inf, 1.0, 2.0, np.inf])
    assert np.all(v[1:] >= v[:-1])
    assert f.domain == (0.0, 1.0)


def test_monotone_support_is_trivial():
    nu = DiscreteMeasure([[0, 0], [1, 1], [2, 3]], [0.2, 0.3, 0.5])
    out = extract_equilibrium(solve(nu))
    np.testing.assert_allclose(out.r, out.u)
    np.testing.assert_allclose(out.s, out.v)
    np.testing.assert_allclose(out.q, 0.0, atol=1e-12)
    np.testing.assert_allclose(out.profit, 0.0, atol=1e-12)
    assert verify_best_response(out, np.linspace(-10, 10, 2001))


def test_example2_has_no_map_equilibrium():
    nu, *_ = fixture_example2()
    with pytest.raises(NoMapEquilibrium, match="no map equilibrium"):
        extract_equilibrium(solve(nu))


def test_tampered_order_fails_best_response(gauss):
    _, _, out = gauss
    q = out.q / 2
    profit = q * (out.v - out.pricing_rule(q + out.u))
    bad = dataclasses.replace(out, q=q, r=q + out.u, profit=profit)
    assert not verify_best_response(bad, np.linspace(-10, 10, 10_000))


def test_tampered_price_breaks_efficiency(gauss):
    nu, _, out = gauss
    g = np.abs(out.r - out.r[0]) <= 1e-9
    s = out.s.copy()
    s[g] += 0.1
    assert verify_efficiency(dataclasses.replace(out, s=s), nu) >= 0.1 - 1e-9


def test_zero_times_infinity_convention():
    f = PricingRule(MonotoneGraph([[0.0, 0.0], [1.0, 1.0]], [0.0, 1.0], [0.0, 1.0]))
    nu = DiscreteMeasure([[0.5, 0.5]], [1.0])
    from bmot.equilibrium import EquilibriumOutcome

    out = EquilibriumOutcome(f, *(np.array([v]) for v in (0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 1.0)))
    t = profit_table(out, [-5.0, 0.0, 5.0])
    # off-domain orders earn -inf; q = 0 earns exactly 0
    assert t[0, 0] == -np.inf and t[0, 1] == 0.0 and t[0, 2] == -np.inf
    assert verify_best_response(out, [-5.0, 0.0, 5.0])
    assert len(nu) == 1
