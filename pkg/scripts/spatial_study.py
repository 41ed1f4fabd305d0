"""Spatial convergence ladder for a builtin problem.

Example::

    python scripts/spatial_study.py coupled_disk --beta 0 --levels 4 8 16 32
"""
import argparse

from dynbc.problems import BUILTIN_NAMES, builtin
from dynbc.studies import spatial_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem", choices=BUILTIN_NAMES)
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--lumping", default="consistent")
    ap.add_argument("--method", default="bdf2")
    ap.add_argument("--T", type=float, default=0.25)
    ap.add_argument("--tau-factor", type=float, default=0.25)
    ap.add_argument("--tau-rule", default="h2", choices=["h2", "h", "fixed"])
    ap.add_argument("--mu", type=float)
    ap.add_argument("--kappa", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--csv", help="write the error table here")
    args = ap.parse_args()

    prob = builtin(args.problem)
    if any(v is not None for v in (args.mu, args.kappa, args.beta)):
        prob = prob.with_coefficients(args.mu, args.kappa, args.beta)
    table = spatial_study(prob, args.levels, args.lumping, args.method, args.T,
                          tau_factor=args.tau_factor, tau_rule=args.tau_rule)
    print(table.format())
    if args.csv:
        table.to_csv(args.csv)


if __name__ == "__main__":
    main()
