"""Command-line front end: ``dynbc solve|convergence|stability|list-problems``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 a convergence or stability threshold was missed.
"""
from __future__ import annotations

import argparse
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .config import load_config
from .discretization import SemiDiscrete
from .errors import ConfigurationError, DynbcError
from .integrators import run
from .problems import BUILTIN_NAMES, builtin
from .report import ErrorTable, write_csv
from .ritz import NORM_NAMES, error_norms, mass_norm
from .stability import STABILITY_COLUMNS
from .studies import force_splitting_mnorm, spatial_study, stability_sweep, temporal_study
from .vtk import write_vtk

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_THRESHOLD = 0, 1, 2, 3
DEFAULT_STABILITY_TAUS = (0.01, 0.1, 1.0, 10.0)


class PhaseError(Exception):
    def __init__(self, phase, exc):
        super().__init__(f"{phase}: {exc}")
        self.phase = phase
        self.cause = exc


@contextmanager
def phase(name, timings=None):
    """Label solver errors with the phase in which they occurred."""
    t0 = time.perf_counter()
    try:
        yield
    except ConfigurationError:
        raise
    except (DynbcError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise PhaseError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def _startup_options(cfg, prob):
    opts = dict(cfg.integrator.options)
    if "startup" not in opts and prob.exact is None:
        opts["startup"] = "bootstrap"
    return opts


def _resolve_thresholds(thresholds, table: ErrorTable):
    """Match lowercase config names to table columns."""
    lookup = {n.lower(): n for n in table.names}
    out = {}
    for name, bounds in thresholds.items():
        out[lookup.get(name.lower(), name)] = bounds
    return out


def _report_failures(failures) -> int:
    for name, rate, bounds in failures:
        print(f"THRESHOLD FAIL {name}: eoc={rate:.4f} bounds={bounds}")
    return EXIT_THRESHOLD if failures else EXIT_OK


def cmd_solve(path) -> int:
    cfg = load_config(path)
    prob = cfg.build_problem()
    if cfg.integrator.tau is None:
        raise ConfigurationError("[integrator] tau is required for solve")
    try:
        icfg = cfg.integrator.build(**_startup_options(cfg, prob))
        icfg.n_steps  # T must be a multiple of tau
    except DynbcError as exc:
        raise ConfigurationError(f"[integrator] {exc}") from None
    timings = {}
    with phase("mesh", timings):
        mesh = cfg.build_mesh()
        mesh.validate()
    with phase("assembly", timings):
        ode = SemiDiscrete(mesh, prob, cfg.problem.lumping, source=cfg.discrete_source)
        ode.system(0.0)
    with phase("time stepping", timings):
        traj = run(ode, icfg)
    out = cfg.out_dir()
    cols = ["problem", "method", "lumping", "n_vertices", "h", "tau", "T", "n_steps",
            "M_norm"]
    row = [prob.name, icfg.method, cfg.problem.lumping.value, mesh.n_vertices, mesh.h,
           icfg.tau, icfg.T, traj.n_steps, mass_norm(traj.final, ode.system(icfg.T).M)]
    if prob.exact is not None:
        with phase("error evaluation", timings):
            errs = error_norms(traj.final, prob.exact, mesh, prob.coeffs, icfg.T)
        cols += list(NORM_NAMES)
        row += [errs[k] for k in NORM_NAMES]
    with phase("output", timings):
        write_csv(out / "report.csv", cols, [row], cfg.hash)
        if cfg.output.vtk:
            for t, u in zip(traj.times, traj.states):
                data = {"u": u}
                if prob.exact is not None:
                    ue = prob.exact.u(mesh.vertices, t)
                    data.update(u_exact=ue, error=u - ue)
                write_vtk(out / f"solution_{t:.6f}.vtk", mesh, data,
                          f"{prob.name} t={t:.17g}")
    for c, v in zip(cols, row):
        print(f"{c:>18} {v}")
    print("timings " + " ".join(f"{k}={v:.3f}s" for k, v in timings.items()))
    return EXIT_OK


def cmd_convergence(path) -> int:
    cfg = load_config(path)
    prob = cfg.build_problem()
    st = cfg.study
    out = cfg.out_dir()
    opts = _startup_options(cfg, prob)
    if st.kind in (None, "spatial"):
        if not cfg.mesh.levels:
            raise ConfigurationError("[mesh] levels is required for a spatial study")
        with phase("spatial study"):
            table = spatial_study(prob, cfg.mesh.levels, cfg.problem.lumping,
                                  cfg.integrator.method, cfg.integrator.T,
                                  tau_factor=st.tau_factor, tau_rule=st.tau_rule, **opts)
        fname = f"spatial_{prob.name}.csv"
    elif st.kind == "temporal":
        if not st.taus:
            raise ConfigurationError("[study] taus: empty tau grid")
        methods = st.methods or (cfg.integrator.method,)
        mesh = cfg.build_mesh()
        with phase("temporal study"):
            table, info = temporal_study(
                prob, mesh, methods, st.taus, cfg.integrator.T, cfg.problem.lumping,
                source=cfg.discrete_source, reference=st.reference, tau_ref=st.tau_ref,
                ref_method=st.ref_method, **opts)
        for k, v in info.items():
            print(f"reference {k} = {v}")
        fname = f"temporal_{prob.name}.csv"
    else:
        raise ConfigurationError(f"[study] kind {st.kind!r} is not a convergence study")
    table.to_csv(out / fname, cfg.hash)
    print(table.format())
    failures = table.check(_resolve_thresholds(st.thresholds, table), st.eoc_rows)
    return _report_failures(failures)


def cmd_stability(path) -> int:
    cfg = load_config(path)
    prob = cfg.build_problem()
    st = cfg.study
    taus = DEFAULT_STABILITY_TAUS if st.taus is None else st.taus
    if not taus:
        raise ConfigurationError("[study] taus: empty tau grid")
    if prob.coeffs.time_dependent:
        raise ConfigurationError("stability sweep needs time-independent coefficients")
    out = cfg.out_dir()
    with phase("stability sweep"):
        rows = stability_sweep(st.levels, taus, st.n_random, st.seed, coeffs=prob.coeffs,
                               random_taus=st.random_taus)
    write_csv(out / "stability.csv", STABILITY_COLUMNS,
              [[r[c] for c in STABILITY_COLUMNS] for r in rows], cfg.hash)
    bad = [r for r in rows if not r["pass"]]
    worst = max(rows, key=lambda r: r["norm"])
    print(f"{len(rows)} (system, tau) pairs, {len(bad)} failures; "
          f"max |L S L^-1| = {worst['norm']:.15f} ({worst['system']}, tau={worst['tau']})")
    print(f"max |L10| = {max(r['L10_norm'] for r in rows):.15f}")
    if st.check_force_mnorm:
        with phase("force splitting check"):
            frows = force_splitting_mnorm(st.levels, taus, seed=st.seed, coeffs=prob.coeffs)
        fcols = ("n", "method", "tau", "max_ratio", "pass")
        write_csv(out / "force_mnorm.csv", fcols, [[r[c] for c in fcols] for r in frows],
                  cfg.hash)
        fbad = [r for r in frows if not r["pass"]]
        print(f"force splitting M-norm: {len(frows)} runs, {len(fbad)} failures; "
              f"max step ratio {max(r['max_ratio'] for r in frows):.15f}")
        bad += fbad
    for r in bad[:10]:
        print(f"FAIL {r}")
    return EXIT_THRESHOLD if bad else EXIT_OK


def cmd_list_problems() -> int:
    for name in BUILTIN_NAMES:
        p = builtin(name)
        c = p.coeffs
        if c.time_dependent:
            coeffs = "time-dependent coefficients"
        else:
            coeffs = (f"mu={c.mu.value:g} kappa={c.kappa.value:g} beta={c.beta.value:g}"
                      if all(f.constant_in_space for f in (c.mu, c.kappa, c.beta))
                      else "variable coefficients")
        kind = "semi-linear" if p.nonlinearity is not None else "linear"
        exact = "exact solution" if p.exact is not None else "no exact solution"
        print(f"{name:<24} {p.domain_kind.value:<7} {kind:<12} {coeffs}; {exact}; T={p.T:g}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="dynbc", description=(
        "Finite element solver for parabolic problems with dynamic boundary conditions."))
    ap.add_argument("--version", action="version", version=f"dynbc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "run one configured simulation"),
                           ("convergence", "run a spatial or temporal convergence study"),
                           ("stability", "run the splitting stability sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="INI configuration file")
    sub.add_parser("list-problems", help="list builtin problems")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-problems":
            return cmd_list_problems()
        cmd = {"solve": cmd_solve, "convergence": cmd_convergence,
               "stability": cmd_stability}[args.command]
        return cmd(args.config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhaseError as exc:
        print(f"error during {exc.phase}: {exc.cause}", file=sys.stderr)
        return EXIT_RUNTIME
    except DynbcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
