#!/usr/bin/env python3
"""Manufactured-solution convergence study for the coupled solver.

Solves the coupled system against an analytic cosine solution on a
sequence of grids and prints relative L2 errors with observed orders.
"""

import argparse

from crystalsurf.analysis import mms_convergence
from crystalsurf.energy import ModelParams


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=1, choices=(1, 2))
    ap.add_argument("--cells", type=int, nargs="+", default=[33, 65, 129, 257])
    ap.add_argument("--p", type=float, default=1.5)
    ap.add_argument("--beta0", type=float, default=0.5)
    ap.add_argument("--tau", type=float, default=0.1)
    ap.add_argument("--amplitude", type=float, default=0.06)
    args = ap.parse_args()

    params = ModelParams(p=args.p, beta0=args.beta0, a=1.0, tau=args.tau, delta=1e-6)
    rows = mms_convergence(args.dim, args.cells, params, amplitude=args.amplitude)
    print(f"{'cells':>6} {'h':>10} {'err_u':>12} {'order':>6} {'err_rho':>12} {'order':>6}")
    for r in rows:
        ou = "" if r.order_u is None else f"{r.order_u:6.2f}"
        orho = "" if r.order_rho is None else f"{r.order_rho:6.2f}"
        print(f"{r.cells:>6} {r.h:>10.3e} {r.err_u:>12.4e} {ou:>6} {r.err_rho:>12.4e} {orho:>6}")


if __name__ == "__main__":
    main()
