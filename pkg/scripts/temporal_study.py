"""Temporal convergence of one or more integrators on a fixed mesh.

Example::

    python scripts/temporal_study.py coupled_square --methods bdf1 bdf2 bdf3 --n 32
"""
import argparse
from fractions import Fraction

from dynbc.mesh import build_mesh
from dynbc.problems import BUILTIN_NAMES, builtin
from dynbc.studies import temporal_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem", choices=BUILTIN_NAMES)
    ap.add_argument("--methods", nargs="+", default=["bdf1", "bdf2"])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--taus", nargs="+", type=Fraction,
                    default=[Fraction(1, 10 * 2 ** j) for j in range(5)])
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--lumping", default="consistent")
    ap.add_argument("--source", default="ritz", choices=["ritz", "interpolant", "continuous"])
    ap.add_argument("--tau-ref", type=Fraction,
                    help="compare with a fine-step run instead of the exact semi-discrete solution")
    ap.add_argument("--csv")
    args = ap.parse_args()

    prob = builtin(args.problem)
    mesh = build_mesh(prob.domain_kind, args.n)
    ref = {"reference": "tau_ref", "tau_ref": float(args.tau_ref)} if args.tau_ref else {}
    table, info = temporal_study(prob, mesh, args.methods, [float(t) for t in args.taus],
                                 args.T, args.lumping, source=args.source, **ref)
    for k, v in info.items():
        print(f"{k} = {v}")
    print(table.format())
    if args.csv:
        table.to_csv(args.csv)


if __name__ == "__main__":
    main()
