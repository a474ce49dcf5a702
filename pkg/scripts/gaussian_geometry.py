"""Why the recovered G leaves the line x2 = lambda x1 on correlated Gaussian grids.

For each correlated case prints the atom that is weakly south-west of all
others (if any), its potential and distance to the line, and the plan's
x-atoms farthest from the line with their mass.
"""

import argparse
import os
import sys
import warnings

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

import oracles  # noqa: E402
from bmot import cost, discretize_gaussian, solve  # noqa: E402


def corner(Y):
    """Index of an atom weakly below-left of every other atom, else None."""
    for i in (np.argmin(Y[:, 0] + Y[:, 1]), np.argmax(Y[:, 0] + Y[:, 1])):
        d = Y - Y[i]
        if np.all(d >= -1e-12) or np.all(d <= 1e-12):
            return int(i)
    return None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--rho", type=float, nargs="+", default=[0.5, -0.5])
    args = ap.parse_args(argv)
    warnings.simplefilter("ignore")
    for rho in args.rho:
        nu = discretize_gaussian(1.0, 1.0, rho, args.n)
        r = solve(nu)
        Y = nu.atoms
        dist = oracles.dist_to_line(1.0)
        print(f"rho={rho:g}: value {r.primal_value:.6f} (target {(rho - 1) / 2:.6f}), certified {r.certified}")
        i = corner(Y)
        if i is not None:
            others = np.delete(Y, i, axis=0)
            cmin = float(cost(others, Y[i]).min())
            print(
                f"  corner atom {Y[i]}: min c with others {cmin:.3e} >= 0, "
                f"phi {r.phi.phi[i]:.3e}, on G {-r.G.phi(Y[i:i + 1])[0]:.1e}, distance to line {dist(Y[i])[0]:.4f}"
            )
        else:
            print("  no corner atom")
        km = r.plan.x_mass()
        live = km > 0
        X = r.plan.x_atoms[live]
        d = dist(X)
        o = np.argsort(-d)[:4]
        for k in o:
            print(f"  x-atom {X[k]} mass {km[live][k]:.2e} distance to line {d[k]:.4f}")


if __name__ == "__main__":
    main()
