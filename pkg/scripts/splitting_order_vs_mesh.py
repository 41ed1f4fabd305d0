"""Observed splitting orders as the mesh is refined.

Strang splitting of the bulk and surface parts is second order only while
τ‖Â‖ stays moderate; on finer meshes the rate drops towards 1.5 because
the split operators do not commute on the solution. This script prints the
last observed rate per mesh size for each splitting variant.
"""
import argparse

from dynbc.discretization import SemiDiscrete
from dynbc.integrators import SPLIT_METHODS, IntegratorConfig, run
from dynbc.mesh import build_mesh
from dynbc.problems import builtin
from dynbc.ritz import eoc, mass_norm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="coupled_square")
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--taus", type=float, nargs="+", default=[0.1, 0.05, 0.025, 0.0125, 0.00625])
    args = ap.parse_args()

    prob = builtin(args.problem)
    print(f"{'n':>4} " + " ".join(f"{m:>20}" for m in SPLIT_METHODS))
    for n in args.sizes:
        ode = SemiDiscrete(build_mesh(prob.domain_kind, n), prob, "full", source="ritz")
        M, exact = ode.system(1.0).M, ode.reference(1.0)
        last = []
        for m in SPLIT_METHODS:
            errs = [mass_norm(run(ode, IntegratorConfig(m, t, 1.0)).final - exact, M)
                    for t in args.taus]
            last.append(eoc(args.taus, errs)[-1])
        print(f"{n:>4} " + " ".join(f"{r:20.3f}" for r in last))


if __name__ == "__main__":
    main()
