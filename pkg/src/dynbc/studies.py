"""Convergence studies and stability sweeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .assembly import CoefficientSet, assemble
from .discretization import MatrixODE, SemiDiscrete
from .integrators import BDF_METHODS, IntegratorConfig, run
from .mesh import build_mesh, mesh_ladder
from .report import ErrorTable
from .ritz import error_norms, mass_norm
from .stability import BlockSystem, random_block_system, verify_stability



def thread_count() -> int:
    """Worker threads for ladder levels, capped by ``DYNBC_THREADS``."""
    env = os.environ.get("DYNBC_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            pass
    return n


def parallel_map(fn, items, threads=None):
    items = list(items)
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fitted_step(T: float, target: float) -> float:
    """Largest τ ≤ target that divides T into whole steps."""
    return T / math.ceil(T / target - 1e-9)


TAU_RULES = {"h2": 2, "h": 1, "fixed": 0}


def spatial_study(problem, levels, lumping="consistent", method="bdf2", T=0.25,
                  tau_factor=0.25, tau_rule="h2", startup="exact_ritz", threads=None,
                  with_hminus=True, **config) -> ErrorTable:
    """Errors at time ``T`` on a refinement ladder.

    The step is the largest τ ≤ tau_factor·h^p dividing ``T``, with p = 2
    for ``tau_rule="h2"``, p = 1 for ``"h"`` (full-discretisation ladders)
    and τ = tau_factor for ``"fixed"``. Nested meshes are produced by red
    refinement wherever consecutive levels double, which keeps disk
    families boundary-conforming.
    """
    if tau_rule not in TAU_RULES:
        raise ValueError(f"unknown tau rule {tau_rule!r}")
    p = TAU_RULES[tau_rule]
    meshes = mesh_ladder(problem.domain_kind, levels)

    def one(mesh):
        tau = fitted_step(T, tau_factor * mesh.h ** p)
        ode = SemiDiscrete(mesh, problem, lumping)
        traj = run(ode, IntegratorConfig(method, tau, T, startup=startup, **config))
        return mesh.h, error_norms(traj.final, problem.exact, mesh, problem.coeffs, T,
                                   with_hminus=with_hminus)

    table = ErrorTable("h")
    for h, errs in parallel_map(one, meshes, threads):
        table.add(h, errs)
    return table


def temporal_study(problem, mesh, methods, taus, T=1.0, lumping="consistent",
                   source="ritz", startup=None, reference="exact",
                   tau_ref=None, ref_method=None, threads=None, **config):
    """Time-discretisation errors on a fixed mesh.

    The error is |u_N − u_ref|_M with ``u_ref`` the exact semi-discrete
    solution (``reference="exact"``, available for the discrete source
    modes) or a run with step ``tau_ref``. By default the exact start values
    come from the trajectory the source mode makes exact. Returns
    ``(table, info)``: one :class:`ErrorTable` with a column per method, and
    the reference data.
    """
    if startup is None:
        # start on the trajectory the source mode makes exact
        startup = "exact_interpolant" if source == "interpolant" else "exact_ritz"
    taus = sorted((float(t) for t in taus), reverse=True)
    ode = SemiDiscrete(mesh, problem, lumping, source=source)
    M = ode.system(T).M
    info = {}
    if reference == "exact":
        ref = ode.reference(T)
    elif reference == "tau_ref":
        if tau_ref is None:
            raise ValueError("tau_ref reference needs tau_ref")
        bdfs = [m for m in methods if m in BDF_METHODS]
        ref_method = ref_method or (max(bdfs) if bdfs else methods[0])
        ref = run(ode, IntegratorConfig(ref_method, tau_ref, T, startup=startup, **config)).final
        info.update(ref_method=ref_method, tau_ref=tau_ref)
        if source != "continuous":
            info["ref_vs_exact"] = mass_norm(ref - ode.reference(T), M)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    info["ref_norm"] = mass_norm(ref, M)

    def one(job):
        method, tau = job
        traj = run(ode, IntegratorConfig(method, tau, T, startup=startup, **config))
        return method, tau, mass_norm(traj.final - ref, M)

    jobs = [(m, t) for t in taus for m in methods]
    errs = {(m, t): e for m, t, e in parallel_map(one, jobs, threads)}
    table = ErrorTable("tau")
    for t in taus:
        table.add(t, {m: errs[m, t] for m in methods})
    return table, info


def force_splitting_mnorm(levels=(4, 8, 16), taus=(0.01, 0.1, 1.0, 10.0), steps=10,
                          methods=("split_force_strang", "split_force_lie"), seed=0,
                          coeffs=None):
    """Max ratio |u^{n+1}|_M / |u^n|_M for source-free force splitting from random data."""
    coeffs = coeffs or CoefficientSet.constant(1.0, 1.0, 0.0)
    rng = np.random.default_rng(seed)
    rows = []
    for n in levels:
        mesh = build_mesh("square", n)
        sysm = assemble(mesh, coeffs, 0.0, "full")
        ode = MatrixODE(sysm.M, sysm.A, A_surf=sysm.A_surf, boundary=mesh.boundary_vertices,
                        u0=rng.standard_normal(mesh.n_vertices))
        for method in methods:
            for tau in taus:
                norms = []
                run(ode, IntegratorConfig(method, tau, steps * tau),
                    observer=lambda k, t, u: norms.append(mass_norm(u, sysm.M)))
                norms = np.array(norms)
                ratio = float(np.max(norms[1:] / norms[:-1]))
                rows.append({"n": n, "method": method, "tau": tau, "max_ratio": ratio,
                             "pass": bool(np.all(norms[1:] <= norms[:-1] * (1 + 1e-12)))})
    return rows


def stability_sweep(levels=(2, 4, 8), taus=(0.01, 0.1, 1.0, 10.0), n_random=100,
                    seed=0, random_size=(4, 24), coeffs=None, random_taus=None):
    """Stability quantities for assembled square-mesh systems and random blocks.

    Returns a list of dict rows with keys ``system``, ``tau``, ``L10_norm``,
    ``S_tilde_norm``, ``norm`` and ``pass``.
    """
    taus = list(taus)
    if not taus:
        raise ValueError("empty tau grid")
    coeffs = coeffs or CoefficientSet.constant(1.0, 1.0, 0.0)
    rows = []
    for n in levels:
        sysm = assemble(build_mesh("square", n), coeffs, 0.0, "full")
        blocks = BlockSystem.from_system(sysm)
        for tau in taus:
            r = verify_stability(blocks, tau)
            rows.append({"system": f"square_n{n}", **r})
    rng = np.random.default_rng(seed)
    rtaus = list(random_taus) if random_taus is not None else list(np.logspace(-3, 1, 5))
    for i in range(n_random):
        blocks = random_block_system(rng, int(rng.integers(*random_size)))
        for tau in rtaus:
            r = verify_stability(blocks, tau)
            rows.append({"system": f"random_{i}", **r})
    return rows
