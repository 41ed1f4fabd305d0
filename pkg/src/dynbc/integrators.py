"""Time integrators: BDF 1–5, exponential Euler, and bulk–surface splittings.

All methods act on an ODE object exposing ``matrices(t)``, ``load(t)``,
``load_split(t)``, ``split_matrices(t)``, ``mass_diag(t)``, ``F``/``dF``,
``boundary``/``interior`` and ``start_values`` (see
:mod:`dynbc.discretization`).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial

from .errors import (ConfigurationError, DynbcError, InvalidArgumentError,
                     NewtonConvergenceError, PreconditionError, SolverFailureError)
from .linalg import Factorized, SpectralOperator, phi1_apply, sym_scale

BDF_METHODS = tuple(f"bdf{k}" for k in range(1, 6))
SPLIT_METHODS = ("split_force_lie", "split_force_strang", "split_comp_lie", "split_comp_strang")
METHODS = BDF_METHODS + ("exp_euler",) + SPLIT_METHODS
STARTUPS = ("exact_ritz", "exact_interpolant", "bootstrap")

# dense eigendecompositions are cached for repeated φ-actions up to this size
SPECTRAL_CACHE_LIMIT = 2500


@dataclass
class IntegratorConfig:
    """Time-stepping parameters.

    ``phi_method`` selects how φ(−sÂ)v is applied: ``auto`` caches a dense
    eigendecomposition when the matrices are fixed and small enough and
    otherwise defers to :func:`dynbc.linalg.phi1_apply`.
    """

    method: str = "bdf1"
    tau: float = 0.01
    T: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    startup: str = "exact_ritz"
    averaged_source: bool = False
    linearly_implicit: bool = False
    phi_tol: float = 1e-10
    phi_method: str = "auto"
    save_times: tuple = ()

    def __post_init__(self):
        self.method = str(self.method).strip().lower()
        if self.method not in METHODS:
            if self.method.startswith("bdf"):
                raise InvalidArgumentError(f"BDF order must be 1..5, got {self.method!r}")
            raise InvalidArgumentError(
                f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not (self.tau > 0):
            raise InvalidArgumentError("tau must be positive")
        if self.T < self.tau * (1 - 1e-12):
            raise InvalidArgumentError("T must be at least tau")
        if self.startup not in STARTUPS:
            raise InvalidArgumentError(f"unknown startup {self.startup!r}")
        if self.phi_method not in ("auto", "krylov", "dense"):
            raise InvalidArgumentError(f"unknown phi_method {self.phi_method!r}")

    @property
    def n_steps(self) -> int:
        n = int(round(self.T / self.tau))
        if abs(n * self.tau - self.T) > 1e-9 * max(1.0, self.T):
            raise ConfigurationError(f"T={self.T} is not a multiple of tau={self.tau}")
        return n

    @property
    def bdf_order(self) -> int:
        return int(self.method[3:]) if self.method in BDF_METHODS else 0


@dataclass
class Trajectory:
    """Snapshots ``(times[i], states[i])`` of a run, times increasing."""

    method: str
    tau: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    n_steps: int = 0
    wall_time: float = 0.0
    newton_iterations: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return self.times[-1]

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidArgumentError(f"no snapshot at t={t}")
        return self.states[i]


class _Recorder:
    def __init__(self, config, observer):
        self.traj = Trajectory(config.method, config.tau)
        self.save = sorted(float(s) for s in config.save_times)
        self.tau = config.tau
        self.N = config.n_steps
        self.observer = observer

    def __call__(self, n, u):
        t = n * self.tau
        if self.observer is not None:
            self.observer(n, t, u)
        if n == 0 or n == self.N or any(abs(t - s) <= 0.5 * self.tau * (1 - 1e-9)
                                        for s in self.save):
            if not self.traj.times or self.traj.times[-1] != t:
                self.traj.times.append(t)
                self.traj.states.append(np.array(u, copy=True))


# -- BDF ---------------------------------------------------------------------

def bdf_coefficients(k: int) -> np.ndarray:
    """Coefficients δ_0..δ_k of Σ_{ℓ=1}^k (1/ℓ)(1−ζ)^ℓ = Σ_j δ_j ζ^j."""
    if int(k) != k or not 1 <= k <= 5:
        raise InvalidArgumentError(f"BDF order must be in 1..5, got {k!r}")
    base = Polynomial([1.0, -1.0])
    p = sum((base ** l) / l for l in range(1, int(k) + 1))
    return p.coef


def extrapolation_coefficients(k: int) -> np.ndarray:
    """γ_1..γ_k with Σ_j γ_j u^{n−j} the order-k extrapolation of u^n."""
    p = Polynomial([1.0]) - Polynomial([1.0, -1.0]) ** k
    return p.coef[1:]


def _solve(G, rhs, step, cache=None, key=None):
    try:
        if cache is not None:
            fac = cache.get(key)
            if fac is None:
                fac = cache[key] = _factorize(G)
            return fac.solve(rhs)
        return _factorize(G).solve(rhs)
    except SolverFailureError as exc:
        raise SolverFailureError(f"linear solve failed at step {step}: {exc}",
                                 residual=exc.residual, step=step) from exc


def _factorize(G):
    try:
        return Factorized(G, spd=True)
    except SolverFailureError:
        return Factorized(G, spd=False)


def run_bdf(ode, config: IntegratorConfig, observer: Optional[Callable] = None) -> Trajectory:
    """k-step BDF: (δ₀/τ M + A) uⁿ = b(tⁿ) + F(uⁿ) − (1/τ) M Σ_{j≥1} δ_j u^{n−j}."""
    k = config.bdf_order
    if k == 0:
        raise InvalidArgumentError(f"{config.method} is not a BDF method")
    tau, N = config.tau, config.n_steps
    rec = _Recorder(config, observer)
    t0 = time.perf_counter()
    start = ode.start_values(k, tau, config.startup)
    if start is None:
        hist = [ode.initial_value()]
    else:
        hist = [np.asarray(v, dtype=float) for v in start[:min(k, N + 1)]]
    for j, u in enumerate(hist):
        rec(j, u)
    cache = None if ode.time_dependent else {}
    for n in range(len(hist), N + 1):
        order = min(k, len(hist))
        delta = bdf_coefficients(order)
        t = n * tau
        M, A = ode.matrices(t)
        past = sum(delta[j] * hist[-j] for j in range(1, order + 1))
        rhs = ode.load(t) - (M @ past) / tau
        G = (delta[0] / tau) * M + A
        if ode.is_linear:
            u = _solve(G, rhs, n, cache, order)
        else:
            u, its = _newton(ode, G, rhs, hist, order, t, n, config)
            rec.traj.newton_iterations += its
        hist.append(u)
        if len(hist) > k:
            hist.pop(0)
        rec(n, u)
    rec.traj.n_steps = N
    rec.traj.wall_time = time.perf_counter() - t0
    return rec.traj


def _newton(ode, G, rhs, hist, order, t, step, config):
    gam = extrapolation_coefficients(min(order, len(hist)))
    guess = sum(g * hist[-j - 1] for j, g in enumerate(gam))
    if config.linearly_implicit:
        J = (G - ode.dF(guess, t)).tocsr()
        u = _solve(J, rhs + ode.F(guess, t) - ode.dF(guess, t) @ guess, step)
        return u, 1
    u = guess
    for it in range(1, config.newton_max_iter + 1):
        R = G @ u - ode.F(u, t) - rhs
        J = (G - ode.dF(u, t)).tocsr()
        du = _solve(J, R, step)
        u = u - du
        if not np.all(np.isfinite(u)):
            break
        if np.max(np.abs(du)) <= config.newton_tol * (1.0 + np.max(np.abs(u))):
            return u, it
    res = float(np.linalg.norm(G @ u - ode.F(u, t) - rhs)) if np.all(np.isfinite(u)) else np.inf
    raise NewtonConvergenceError(
        f"Newton did not converge in {config.newton_max_iter} iterations at step {step}",
        residual=res, step=step)


# -- exact linear subflows -----------------------------------------------------

class ExactFlow:
    """Exact solution operator of D u' = −B u + c with diagonal D > 0 and constant c.

    u(s) = u₀ + s D^{-1/2} φ(−s B̂) D^{-1/2}(c − B u₀),  B̂ = D^{-1/2} B D^{-1/2}.
    """

    def __init__(self, B, d, config: IntegratorConfig, cacheable: bool = True):
        self.B = sp.csr_matrix(B)
        self.rs = 1.0 / np.sqrt(np.asarray(d, dtype=float))
        self.Bhat = sym_scale(d, self.B)
        self.tol = config.phi_tol
        self.method = config.phi_method
        n = self.B.shape[0]
        use_cache = (self.method == "dense"
                     or (self.method == "auto" and cacheable and n <= SPECTRAL_CACHE_LIMIT))
        self.op = SpectralOperator(self.Bhat) if use_cache and n else self.Bhat

    def __call__(self, u0, c, s):
        if self.B.shape[0] == 0:
            return u0
        g = self.rs * (c - self.B @ u0)
        meth = "auto" if isinstance(self.op, SpectralOperator) else self.method
        return u0 + s * self.rs * phi1_apply(self.op, g, s, tol=self.tol, method=meth)


def _require_linear(ode, name):
    if not ode.is_linear:
        raise PreconditionError(f"{name} is implemented for linear problems only")


def run_exp_euler(ode, config: IntegratorConfig,
                  observer: Optional[Callable] = None) -> Trajectory:
    """Exponential Euler on y = M^{1/2} u with Â = M^{-1/2} A M^{-1/2}:

    y^{n+1} = yⁿ + τ φ(−τÂ)(−Â yⁿ + b̂(tⁿ)).
    """
    if ode.time_dependent:
        raise PreconditionError("exponential Euler needs time-independent matrices")
    tau, N = config.tau, config.n_steps
    d = ode.mass_diag(0.0)
    M, A = ode.matrices(0.0)
    flow = ExactFlow(A, d, config)
    rec = _Recorder(config, observer)
    t0 = time.perf_counter()
    u = ode.initial_value()
    rec(0, u)
    for n in range(N):
        t = n * tau
        c = ode.load(t) + (ode.F(u, t) if not ode.is_linear else 0.0)
        u = flow(u, c, tau)
        rec(n + 1, u)
    rec.traj.n_steps = N
    rec.traj.wall_time = time.perf_counter() - t0
    return rec.traj


# -- splittings ----------------------------------------------------------------

class _ForceFlows:
    def __init__(self, ode, t, config):
        d = ode.mass_diag(t)
        A_bulk, A_surf = ode.split_matrices(t)
        bnd = ode.boundary
        A_surf = sp.csr_matrix(A_surf)
        Abb = A_surf[bnd][:, bnd]
        # with surface support only, the surface flow never touches interior values
        self.local = abs(Abb).sum() == abs(A_surf).sum()
        cache = not ode.time_dependent
        if self.local:
            self.surf = ExactFlow(Abb, d[bnd], config, cache)
        else:
            self.surf = ExactFlow(A_surf, d, config, cache)
        self.bulk = ExactFlow(A_bulk, d, config, cache)
        self.bnd = bnd

    def surface(self, u, c, s):
        if not self.local:
            return self.surf(u, c, s)
        out = u.copy()
        out[self.bnd] = self.surf(u[self.bnd], c[self.bnd], s)
        return out


class _ComponentFlows:
    def __init__(self, ode, t, config):
        d = ode.mass_diag(t)
        _, A = ode.matrices(t)
        A = sp.csr_matrix(A)
        i, b = ode.interior, ode.boundary
        self.i, self.b = i, b
        self.A10 = A[b][:, i]
        self.A01 = A[i][:, b]
        cache = not ode.time_dependent
        self.f1 = ExactFlow(A[b][:, b], d[b], config, cache)
        self.f0 = ExactFlow(A[i][:, i], d[i], config, cache)

    def surface(self, u, c, s):
        out = u.copy()
        out[self.b] = self.f1(u[self.b], c[self.b] - self.A10 @ u[self.i], s)
        return out

    def bulk(self, u, c, s):
        out = u.copy()
        out[self.i] = self.f0(u[self.i], c[self.i] - self.A01 @ u[self.b], s)
        return out


def run_splitting(ode, config: IntegratorConfig,
                  observer: Optional[Callable] = None) -> Trajectory:
    """Lie/Strang force and component splittings with exactly solved substeps.

    Force splitting separates A = A_Ω + A_Γ (bulk and surface integrals);
    component splitting separates interior and boundary unknowns and freezes
    the cross-coupling within each substep. Matrices are frozen at the start
    of every macro step.
    """
    _require_linear(ode, config.method)
    if config.method not in SPLIT_METHODS:
        raise InvalidArgumentError(f"{config.method} is not a splitting method")
    force = "force" in config.method
    strang = config.method.endswith("strang")
    tau, N = config.tau, config.n_steps
    rec = _Recorder(config, observer)
    wall = time.perf_counter()
    u = ode.initial_value()
    rec(0, u)
    flows = None
    for n in range(N):
        t0, t1 = n * tau, (n + 1) * tau
        if flows is None or ode.time_dependent:
            flows = _ForceFlows(ode, t0, config) if force else _ComponentFlows(ode, t0, config)
        if force:
            bb0, bs0 = ode.load_split(t0)
            if strang:
                bb1, bs1 = ode.load_split(t1)
                bb = 0.5 * (bb0 + bb1) if config.averaged_source else ode.load_split(t0 + tau / 2)[0]
                u = flows.surface(u, bs0, tau / 2)
                u = flows.bulk(u, bb, tau)
                u = flows.surface(u, bs1, tau / 2)
            else:
                u = flows.surface(u, bs0, tau)
                u = flows.bulk(u, bb0, tau)
        else:
            b0 = ode.load(t0)
            if strang:
                b1 = ode.load(t1)
                bm = 0.5 * (b0 + b1) if config.averaged_source else ode.load(t0 + tau / 2)
                u = flows.surface(u, b0, tau / 2)
                u = flows.bulk(u, bm, tau)
                u = flows.surface(u, b1, tau / 2)
            else:
                u = flows.surface(u, b0, tau)
                u = flows.bulk(u, b0, tau)
        rec(n + 1, u)
    rec.traj.n_steps = N
    rec.traj.wall_time = time.perf_counter() - wall
    return rec.traj


def run(ode, config: IntegratorConfig, observer: Optional[Callable] = None) -> Trajectory:
    """Dispatch on ``config.method``."""
    if config.method in BDF_METHODS:
        return run_bdf(ode, config, observer)
    if config.method == "exp_euler":
        return run_exp_euler(ode, config, observer)
    return run_splitting(ode, config, observer)
