"""Model problems and manufactured sources.

Strong form (μ, κ, β may depend on x and t):

    ∂_t u = Δu + f_Ω(u) + f_bulk                       in Ω
    μ ∂_t u = −κu + ∇_Γ·(β∇_Γu) − ∂_ν u + μ f_Γ(u) + μ f_surf   on Γ

``f_Ω``/``f_Γ`` are the optional semi-linear terms; ``f_bulk``/``f_surf``
are given or manufactured sources.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .assembly import CoefficientSet, Field
from .errors import ConfigurationError
from .mesh import DomainKind


# -- geometry of the continuous boundary ---------------------------------------

def boundary_frame(kind, x):
    """Outward unit normal and curvature of the exact boundary near points ``x``.

    For the square the side is picked by proximity; corners are never
    quadrature points. For the disk the frame of the nearest circle point is
    used, which extends the boundary quantities smoothly inside.
    """
    kind = DomainKind(kind)
    x = np.atleast_2d(x)
    if kind is DomainKind.SQUARE:
        d = np.column_stack([x[:, 0], 1 - x[:, 0], x[:, 1], 1 - x[:, 1]])
        side = np.argmin(np.abs(d), axis=1)
        normals = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
        return normals[side], np.zeros(len(x))
    if kind is DomainKind.DISK:
        r = np.hypot(x[:, 0], x[:, 1])
        return x / r[:, None], 1.0 / r
    raise ConfigurationError("manufactured sources need a square or disk boundary")


# -- exact solutions -----------------------------------------------------------

@dataclass(frozen=True)
class ExactSolution:
    """Closures of ``(x, t)``; ``x`` has shape (N, 2).

    ``grad_u`` returns (N, 2), ``hess_u`` returns (N, 2, 2). ``lap_u``,
    ``dnu_u`` and ``lap_gamma_u`` are derived from the gradient and Hessian
    when not given explicitly; the last two take the normal and curvature
    of the boundary as extra arguments.
    """

    u: Callable
    dt_u: Optional[Callable] = None
    grad_u: Optional[Callable] = None
    hess_u: Optional[Callable] = None
    lap_u: Optional[Callable] = None
    dnu_u: Optional[Callable] = None
    lap_gamma_u: Optional[Callable] = None
    dt_grad_u: Optional[Callable] = None

    def time_derivative(self) -> "ExactSolution":
        """Bundle (∂_t u, ∇∂_t u), enough to Ritz-project the time derivative."""
        self.require("dt_u", "dt_grad_u")
        return ExactSolution(self.dt_u, grad_u=self.dt_grad_u)

    def require(self, *names):
        for name in names:
            if name == "dt_grad_u" and self.dt_grad_u is None:
                raise ConfigurationError("exact solution is missing the dt_grad_u closure")
            if name == "lap_u" and (self.lap_u is not None or self.hess_u is not None):
                continue
            if name in ("dnu_u",) and (self.dnu_u is not None or self.grad_u is not None):
                continue
            if name == "lap_gamma_u" and (self.lap_gamma_u is not None
                                          or (self.hess_u is not None
                                              and self.grad_u is not None)):
                continue
            if getattr(self, name, None) is None:
                raise ConfigurationError(f"exact solution is missing the {name} closure")

    def laplacian(self, x, t):
        if self.lap_u is not None:
            return self.lap_u(x, t)
        H = self.hess_u(x, t)
        return H[:, 0, 0] + H[:, 1, 1]

    def normal_derivative(self, x, t, normal):
        if self.dnu_u is not None:
            return self.dnu_u(x, t, normal)
        return np.einsum("id,id->i", self.grad_u(x, t), normal)

    def tangential_derivative(self, x, t, tangent):
        return np.einsum("id,id->i", self.grad_u(x, t), tangent)

    def surface_laplacian(self, x, t, normal, curvature):
        """Δ_Γ u = tᵀ(∇²u)t − curvature·∂_ν u for a curve in the plane."""
        if self.lap_gamma_u is not None:
            return self.lap_gamma_u(x, t, normal, curvature)
        tan = np.column_stack([-normal[:, 1], normal[:, 0]])
        H = self.hess_u(x, t)
        return (np.einsum("id,ide,ie->i", tan, H, tan)
                - curvature * self.normal_derivative(x, t, normal))


def zero_solution() -> ExactSolution:
    z = lambda x, t: np.zeros(len(x))
    return ExactSolution(z, z, lambda x, t: np.zeros((len(x), 2)),
                         lambda x, t: np.zeros((len(x), 2, 2)))


def cosine_mode() -> ExactSolution:
    """u = e^{−t} cos(πx) cos(πy); ∂_ν u = 0 on the unit square boundary."""
    pi = np.pi

    def u(x, t):
        return np.exp(-t) * np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1])

    def grad(x, t):
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        return -pi * np.exp(-t) * np.column_stack([sx * cy, cx * sy])

    def hess(x, t):
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        e = np.exp(-t) * pi ** 2
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = -e * cx * cy
        H[:, 1, 1] = -e * cx * cy
        H[:, 0, 1] = H[:, 1, 0] = e * sx * sy
        return H

    return ExactSolution(u, lambda x, t: -u(x, t), grad, hess,
                         dt_grad_u=lambda x, t: -grad(x, t))


def saddle_mode() -> ExactSolution:
    """u = e^{−t}(x² − y²), harmonic in space."""
    def u(x, t):
        return np.exp(-t) * (x[:, 0] ** 2 - x[:, 1] ** 2)

    def grad(x, t):
        return 2 * np.exp(-t) * np.column_stack([x[:, 0], -x[:, 1]])

    def hess(x, t):
        H = np.zeros((len(x), 2, 2))
        H[:, 0, 0] = 2 * np.exp(-t)
        H[:, 1, 1] = -2 * np.exp(-t)
        return H

    return ExactSolution(u, lambda x, t: -u(x, t), grad, hess,
                         dt_grad_u=lambda x, t: -grad(x, t))


# -- nonlinearities ------------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise semi-linear terms ``f(u, x, t)`` with derivatives in ``u``.

    ``potential_bulk``/``potential_surf`` (functions of ``u``) are set for
    gradient flows and enter the discrete energy.
    """

    f_bulk: Optional[Callable] = None
    f_surf: Optional[Callable] = None
    df_bulk: Optional[Callable] = None
    df_surf: Optional[Callable] = None
    potential_bulk: Optional[Callable] = None
    potential_surf: Optional[Callable] = None


def double_well(mu: float = 1.0) -> Nonlinearity:
    """W(u) = (u²−1)² in the bulk and on the boundary.

    The boundary term is divided by μ because surface terms are tested
    against the μ-weighted inner product.
    """
    W = lambda u: (u ** 2 - 1) ** 2
    fb = lambda u, x, t: -4 * u * (u ** 2 - 1)
    dfb = lambda u, x, t: -(12 * u ** 2 - 4)
    return Nonlinearity(fb, lambda u, x, t: fb(u, x, t) / mu,
                        dfb, lambda u, x, t: dfb(u, x, t) / mu, W, W)


CLIP = 10.0


def cubic_reaction(mu: float = 1.0) -> Nonlinearity:
    """Surface reaction f(ψ) = ψ(1−ψ²), evaluated at ψ clipped to [−10, 10]."""
    def f(u, x, t):
        v = np.clip(u, -CLIP, CLIP)
        return v * (1 - v ** 2) / mu

    def df(u, x, t):
        inside = np.abs(u) <= CLIP
        return np.where(inside, 1 - 3 * np.asarray(u) ** 2, 0.0) / mu

    return Nonlinearity(f_surf=f, df_surf=df)


# -- sources -------------------------------------------------------------------

def mms_sources(exact: ExactSolution, coeffs: CoefficientSet, domain_kind=DomainKind.SQUARE,
                nonlinearity: Optional[Nonlinearity] = None):
    """Sources that make ``exact`` solve the strong problem.

    f_bulk = ∂_t u − Δu − f_Ω(u)
    f_surf = ∂_t u + (κu − ∇_Γ·(β∇_Γu) + ∂_ν u)/μ − f_Γ(u)
    """
    exact.require("dt_u", "lap_u", "dnu_u", "lap_gamma_u")
    nl = nonlinearity or Nonlinearity()

    def f_bulk(x, t):
        val = exact.dt_u(x, t) - exact.laplacian(x, t)
        if nl.f_bulk is not None:
            val = val - nl.f_bulk(exact.u(x, t), x, t)
        return val

    def f_surf(x, t):
        nrm, curv = boundary_frame(domain_kind, x)
        u = exact.u(x, t)
        div = 0.0
        if not coeffs.beta.is_zero:
            div = coeffs.beta(x, t) * exact.surface_laplacian(x, t, nrm, curv)
            if not coeffs.beta.constant_in_space:
                tan = np.column_stack([-nrm[:, 1], nrm[:, 0]])
                db = np.einsum("id,id->i", coeffs.beta.gradient(x, t), tan)
                div = div + db * exact.tangential_derivative(x, t, tan)
        val = exact.dt_u(x, t) + (coeffs.kappa(x, t) * u - div
                                  + exact.normal_derivative(x, t, nrm)) / coeffs.mu(x, t)
        if nl.f_surf is not None:
            val = val - nl.f_surf(u, x, t)
        return val

    return f_bulk, f_surf


@dataclass(frozen=True)
class ProblemSpec:
    """A fully specified model problem.

    ``source`` is ``"mms"`` (manufactured from ``exact``), ``"none"``, or a
    pair of callables ``(f_bulk, f_surf)``.
    """

    name: str
    domain_kind: DomainKind
    coeffs: CoefficientSet
    exact: Optional[ExactSolution] = None
    nonlinearity: Optional[Nonlinearity] = None
    source: object = "mms"
    u0: Optional[Callable] = None
    T: float = 1.0

    @property
    def is_linear(self) -> bool:
        return self.nonlinearity is None

    def sources(self):
        if isinstance(self.source, tuple):
            return self.source
        if self.source == "none":
            return None, None
        if self.source == "mms":
            if self.exact is None:
                raise ConfigurationError(f"problem {self.name!r} has no exact solution for mms")
            return mms_sources(self.exact, self.coeffs, self.domain_kind, self.nonlinearity)
        raise ConfigurationError(f"unknown source mode {self.source!r}")

    def initial(self, x):
        if self.u0 is not None:
            return np.broadcast_to(np.asarray(self.u0(x), dtype=float), (len(x),)).copy()
        if self.exact is not None:
            return self.exact.u(x, 0.0)
        raise ConfigurationError(f"problem {self.name!r} has neither u0 nor exact solution")

    def with_coefficients(self, mu=None, kappa=None, beta=None) -> "ProblemSpec":
        c = self.coeffs
        return replace(self, coeffs=CoefficientSet(
            c.mu if mu is None else mu, c.kappa if kappa is None else kappa,
            c.beta if beta is None else beta))

    def with_exact(self, exact: ExactSolution) -> "ProblemSpec":
        """Manufactured variant: attach ``exact`` and generate matching sources."""
        return replace(self, exact=exact, source="mms", u0=None)


def _time_field(func, const_space=True, grad=None):
    return Field(func, constant_in_time=False, constant_in_space=const_space, grad=grad)


def _nonauto_coeffs() -> CoefficientSet:
    mu = _time_field(lambda x, t: np.full(len(x), 2.0 + np.sin(t)))
    kappa = _time_field(lambda x, t: 1.0 + 0.5 * np.cos(t) * x[:, 0], const_space=False,
                        grad=lambda x, t: np.column_stack(
                            [np.full(len(x), 0.5 * np.cos(t)), np.zeros(len(x))]))
    beta = _time_field(lambda x, t: np.full(len(x), 1.0 + 0.5 * np.sin(t)),
                       grad=lambda x, t: np.zeros((len(x), 2)))
    return CoefficientSet(mu, kappa, beta)


def _allen_cahn_u0(x):
    return 0.2 + 0.1 * np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])


_BUILTINS = {
    "wentzell_square": lambda: ProblemSpec(
        "wentzell_square", DomainKind.SQUARE, CoefficientSet.constant(1.0, 1.0, 0.0),
        cosine_mode()),
    "coupled_square": lambda: ProblemSpec(
        "coupled_square", DomainKind.SQUARE, CoefficientSet.constant(1.0, 0.0, 1.0),
        cosine_mode()),
    "coupled_disk": lambda: ProblemSpec(
        "coupled_disk", DomainKind.DISK, CoefficientSet.constant(1.0, 0.0, 1.0),
        saddle_mode()),
    "nonauto_square": lambda: ProblemSpec(
        "nonauto_square", DomainKind.SQUARE, _nonauto_coeffs(), cosine_mode()),
    "allen_cahn_square": lambda: ProblemSpec(
        "allen_cahn_square", DomainKind.SQUARE, CoefficientSet.constant(1.0, 0.0, 1.0),
        None, double_well(1.0), "none", _allen_cahn_u0, 0.5),
    "reaction_diffusion_disk": lambda: ProblemSpec(
        "reaction_diffusion_disk", DomainKind.DISK, CoefficientSet.constant(1.0, 0.0, 1.0),
        None, cubic_reaction(1.0), "none",
        lambda x: 0.5 * (x[:, 0] ** 2 - x[:, 1] ** 2) + 0.1, 1.0),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin(name: str) -> ProblemSpec:
    """Return a configured builtin problem."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; builtins: {', '.join(BUILTIN_NAMES)}") from None
