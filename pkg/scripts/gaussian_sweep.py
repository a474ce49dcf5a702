"""Pipeline value against the closed form over grid sizes and correlations."""

import argparse
import time
import warnings

from bmot import discretize_gaussian, solve


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 30, 40])
    ap.add_argument("--rho", type=float, nargs="+", default=[-0.5, 0.0, 0.5])
    ap.add_argument("--sigma2", type=float, default=1.0)
    args = ap.parse_args(argv)
    warnings.simplefilter("ignore")
    print("n  rho  value  closed_form  rel_err  gap  seconds")
    for rho in args.rho:
        want = (rho - 1) * args.sigma2 / 2
        for n in args.sizes:
            t = time.perf_counter()
            r = solve(discretize_gaussian(1.0, args.sigma2, rho, n))
            dt = time.perf_counter() - t
            print(f"{n} {rho:g} {r.primal_value:.8f} {want:.8f} {abs(r.primal_value / want - 1):.2e} {r.gap:.1e} {dt:.1f}")


if __name__ == "__main__":
    main()
