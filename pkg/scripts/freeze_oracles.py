"""Recompute the oracle values frozen in the tests.

Independent routes only: the two-line construction by pointwise algebra, the Gaussian
40x40 values through the full pipeline (the brute-force discretisation
oracle), the three-atom instance on a fine grid through a direct HiGHS LP, and dual
upper bounds from the t-grid relaxation.  Compare the printed numbers
with the constants in tests/test_closed_form.py.
"""

import os
import sys
import warnings

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

import oracles  # noqa: E402
from bmot import discretize_gaussian, solve  # noqa: E402
from bmot.closed_form import fixture_example2  # noqa: E402


def main():
    warnings.simplefilter("ignore")
    for u in ([-1.0, 1.0], [-1.0, -0.5, 0.5, 1.0]):
        print(f"example3 u={u}: {oracles.example3_pointwise(u)!r}")
    for s1, s2, rho in [(1.0, 1.0, 0.0), (1.0, 2.0, 0.0), (1.0, 1.0, 0.5), (1.0, 1.0, -0.5)]:
        r = solve(discretize_gaussian(s1, s2, rho, 40))
        print(f"gauss40 ({s1}, {s2}, {rho}): {r.primal_value!r} (dual {r.dual_value!r}, certified {r.certified})")
    nu = fixture_example2()[0]
    g = np.linspace(-1.0, 1.0, 41)
    X = np.array([[a, b] for a in g for b in g])
    v, _ = oracles.plan_lp(nu.atoms, nu.weights, X)
    ub, _ = oracles.dual_lp_grid(nu.atoms, nu.weights)
    print(f"example2 plan LP on a 41x41 grid: {v!r}; t-grid dual upper bound {ub!r}")


if __name__ == "__main__":
    main()
