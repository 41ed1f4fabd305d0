"""Mass and stiffness matrices for P1 elements with boundary integrals.

The discrete bilinear forms are

    m(u, v) = ∫_Ω u v + ∫_Γ μ u v
    a(u, v) = ∫_Ω ∇u·∇v + ∫_Γ κ u v + ∫_Γ β ∂_s u ∂_s v

where Γ is the boundary polyline and ∂_s the derivative along it. The surface
terms are 1D linear elements on the boundary loop, so the surface space is
the trace of the bulk space.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import CoefficientViolationError, InvalidArgumentError
from .mesh import Mesh
from .quadrature import (arc_derivative, bulk_gradients, bulk_quadrature, edge_rule,
                         surface_quadrature)


class Lumping(str, enum.Enum):
    CONSISTENT = "consistent"
    FULL = "full"
    BULK_ONLY = "bulk_only"

    @classmethod
    def parse(cls, value) -> "Lumping":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"consistent": cls.CONSISTENT, "none": cls.CONSISTENT,
                   "full": cls.FULL, "fulllumped": cls.FULL, "full_lumped": cls.FULL,
                   "lumped": cls.FULL, "bulk_only": cls.BULK_ONLY,
                   "bulkonlylumped": cls.BULK_ONLY, "bulk_only_lumped": cls.BULK_ONLY,
                   "bulk": cls.BULK_ONLY}
        if key not in aliases:
            raise InvalidArgumentError(f"unknown lumping mode {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class Field:
    """Scalar field ``f(x, t)`` evaluated on arrays of points ``x`` of shape (N, 2).

    ``grad`` is the spatial gradient, needed only when a spatially varying
    surface diffusion coefficient enters a manufactured source.
    """

    func: Callable
    constant_in_time: bool = False
    constant_in_space: bool = False
    grad: Optional[Callable] = None
    value: Optional[float] = None   # set for constant fields

    @classmethod
    def constant(cls, c: float) -> "Field":
        c = float(c)
        return cls(lambda x, t, c=c: np.full(len(x), c), True, True,
                   lambda x, t: np.zeros((len(x), 2)), c)

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0

    def __call__(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.broadcast_to(np.asarray(self.func(x, t), dtype=float), (len(x),))

    def gradient(self, x, t):
        if self.grad is None:
            raise InvalidArgumentError("field has no gradient closure")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.broadcast_to(np.asarray(self.grad(x, t), dtype=float), (len(x), 2))


def as_field(f) -> Field:
    if isinstance(f, Field):
        return f
    if callable(f):
        return Field(f)
    return Field.constant(f)


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients μ (surface mass), κ (surface reaction), β (surface diffusion)."""

    mu: Field
    kappa: Field
    beta: Field

    def __post_init__(self):
        for name in ("mu", "kappa", "beta"):
            object.__setattr__(self, name, as_field(getattr(self, name)))

    @classmethod
    def constant(cls, mu=1.0, kappa=0.0, beta=0.0) -> "CoefficientSet":
        return cls(Field.constant(mu), Field.constant(kappa), Field.constant(beta))

    @property
    def time_dependent(self) -> bool:
        return not all(f.constant_in_time for f in (self.mu, self.kappa, self.beta))

    def check(self, x, t) -> None:
        """Raise if μ ≤ 0 or β is neither identically zero nor positive at ``x``."""
        mu = self.mu(x, t)
        if np.any(~(mu > 0)):
            raise CoefficientViolationError(
                f"mu must be positive; min sampled value {mu.min():.6g} at t={t}")
        if not self.beta.is_zero:
            beta = self.beta(x, t)
            if np.any(~(beta > 0)):
                raise CoefficientViolationError(
                    "beta must be identically zero or bounded away from zero; "
                    f"min sampled value {beta.min():.6g} at t={t}")


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    mesh: Mesh
    coeffs: CoefficientSet
    t: float
    lumping: Lumping
    M_bulk: sp.csr_matrix
    M_surf: sp.csr_matrix
    K_bulk: sp.csr_matrix
    K_surf: sp.csr_matrix
    C_surf: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def interior(self) -> np.ndarray:
        return self.mesh.interior_vertices

    @property
    def boundary(self) -> np.ndarray:
        return self.mesh.boundary_vertices

    @property
    def dof_partition(self):
        return self.interior, self.boundary

    def _memo(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def M(self) -> sp.csr_matrix:
        return self._memo("M", lambda: (self.M_bulk + self.M_surf).tocsr())

    @property
    def A_bulk(self) -> sp.csr_matrix:
        return self.K_bulk

    @property
    def A_surf(self) -> sp.csr_matrix:
        return self._memo("A_surf", lambda: (self.K_surf + self.C_surf).tocsr())

    @property
    def A(self) -> sp.csr_matrix:
        return self._memo("A", lambda: (self.K_bulk + self.A_surf).tocsr())

    @property
    def is_diagonal_mass(self) -> bool:
        return self.lumping is Lumping.FULL

    @property
    def M_diag(self) -> np.ndarray:
        if not self.is_diagonal_mass:
            raise InvalidArgumentError("mass matrix is not diagonal; use FULL lumping")
        return self._memo("M_diag", lambda: self.M.diagonal().copy())

    @property
    def M_bulk_diag(self) -> np.ndarray:
        return self._memo("M_bulk_diag", lambda: _lumped_bulk_diag(self.mesh))

    @property
    def M_surf_diag(self) -> np.ndarray:
        return self._memo("M_surf_diag",
                          lambda: _lumped_surf_diag(self.mesh, self.coeffs.mu, self.t))


# -- element kernels -------------------------------------------------------

def _symmetric_csr(rows, cols, vals, n) -> sp.csr_matrix:
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    # (a + b)/2 is bitwise symmetric because floating addition commutes
    A = 0.5 * (A + A.T)
    A.sort_indices()
    return A.tocsr()


def _bulk_matrices(mesh: Mesh):
    tri = mesh.triangles
    area = mesh.signed_areas
    g = bulk_gradients(mesh)
    Kloc = area[:, None, None] * np.einsum("tad,tbd->tab", g, g)
    Mref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Mloc = area[:, None, None] * Mref[None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    return _symmetric_csr(rows, cols, Mloc.ravel(), n), _symmetric_csr(rows, cols, Kloc.ravel(), n)


def _edge_weighted_mass(mesh: Mesh, coef: Field, t) -> sp.csr_matrix:
    """∫_Γ c φ_i φ_j with two Gauss points per edge (exact for constant c)."""
    be = mesh.boundary_edges
    q = surface_quadrature(mesh, 2)
    s, _ = edge_rule(2)
    c = coef(q.points, t) * q.weights
    c = c.reshape(len(be), 2)
    m00 = c @ (1 - s) ** 2
    m11 = c @ s ** 2
    m01 = c @ (s * (1 - s))
    loc = np.stack([m00, m01, m01, m11], axis=1)
    rows = np.repeat(be, 2, axis=1).ravel()
    cols = np.tile(be, (1, 2)).ravel()
    return _symmetric_csr(rows, cols, loc.ravel(), mesh.n_vertices)


def _edge_stiffness(mesh: Mesh, beta: Field, t) -> sp.csr_matrix:
    n = mesh.n_vertices
    if beta.is_zero:
        return sp.csr_matrix((n, n))
    q = surface_quadrature(mesh, 2)
    be = mesh.boundary_edges
    bint = (beta(q.points, t) * q.weights).reshape(len(be), 2).sum(axis=1)
    ell = q.weights.reshape(len(be), 2).sum(axis=1)
    k = bint / ell ** 2
    loc = np.stack([k, -k, -k, k], axis=1)
    rows = np.repeat(be, 2, axis=1).ravel()
    cols = np.tile(be, (1, 2)).ravel()
    return _symmetric_csr(rows, cols, loc.ravel(), n)


def _lumped_bulk_diag(mesh: Mesh) -> np.ndarray:
    return np.bincount(mesh.triangles.ravel(), np.repeat(mesh.signed_areas / 3.0, 3),
                       minlength=mesh.n_vertices)


def _lumped_surf_diag(mesh: Mesh, mu: Field, t) -> np.ndarray:
    """Trapezoidal rule on each boundary edge with μ sampled at the endpoints."""
    be = mesh.boundary_edges
    ell = np.hypot(*(mesh.vertices[be[:, 1]] - mesh.vertices[be[:, 0]]).T)
    muv = mu(mesh.vertices[be.ravel()], t).reshape(-1, 2)
    return np.bincount(be.ravel(), (0.5 * ell[:, None] * muv).ravel(),
                       minlength=mesh.n_vertices)


def _check_coefficients(mesh, coeffs, t):
    q = surface_quadrature(mesh, 2)
    pts = np.vstack([q.points, mesh.vertices[mesh.boundary_vertices]])
    coeffs.check(pts, t)


def assemble(mesh: Mesh, coeffs: CoefficientSet, t: float = 0.0,
             lumping=Lumping.CONSISTENT) -> AssembledSystem:
    """Assemble all mass and stiffness pieces at time ``t``.

    Bulk element matrices are integrated exactly. Surface coefficient
    integrals use two Gauss points per boundary edge.
    """
    lumping = Lumping.parse(lumping)
    _check_coefficients(mesh, coeffs, t)
    M_bulk, K_bulk = _bulk_cache(mesh)
    system = AssembledSystem(
        mesh=mesh, coeffs=coeffs, t=float(t), lumping=Lumping.CONSISTENT,
        M_bulk=M_bulk, M_surf=_edge_weighted_mass(mesh, coeffs.mu, t),
        K_bulk=K_bulk, K_surf=_edge_stiffness(mesh, coeffs.beta, t),
        C_surf=_edge_weighted_mass(mesh, coeffs.kappa, t))
    if lumping is Lumping.CONSISTENT:
        return system
    return lump(system, lumping)


_BULK_CACHE: dict = {}


def _bulk_cache(mesh):
    # bulk matrices have no coefficients, so they are reused across time steps
    key = id(mesh)
    hit = _BULK_CACHE.get(key)
    if hit is None or hit[0] is not mesh:
        if len(_BULK_CACHE) > 32:
            _BULK_CACHE.clear()
        hit = (mesh, *_bulk_matrices(mesh))
        _BULK_CACHE[key] = hit
    return hit[1], hit[2]


def lump(system: AssembledSystem, mode) -> AssembledSystem:
    """Replace mass pieces by trapezoidal-rule diagonals; stiffness is unchanged."""
    mode = Lumping.parse(mode)
    if system.lumping is not Lumping.CONSISTENT:
        raise InvalidArgumentError("lump expects a consistent-mass system")
    if mode is Lumping.CONSISTENT:
        return system
    M_bulk = sp.diags(_lumped_bulk_diag(system.mesh)).tocsr()
    M_surf = system.M_surf
    if mode is Lumping.FULL:
        M_surf = sp.diags(_lumped_surf_diag(system.mesh, system.coeffs.mu, system.t)).tocsr()
    return replace(system, lumping=mode, M_bulk=M_bulk, M_surf=M_surf, _cache={})


# -- loads and nonlinearities ---------------------------------------------

def assemble_load(mesh: Mesh, coeffs: CoefficientSet, f_bulk, f_surf, t: float,
                  split: bool = False):
    """Load vector b_i = ∫_Ω f_bulk φ_i + ∫_Γ μ f_surf φ_i.

    Edge-midpoint rule in the bulk, two Gauss points per boundary edge.
    ``f_bulk`` and ``f_surf`` are callables ``(x, t)`` or ``None`` for zero.
    With ``split=True`` returns the bulk and surface parts separately.
    """
    n = mesh.n_vertices
    b_bulk = np.zeros(n)
    b_surf = np.zeros(n)
    if f_bulk is not None:
        qb = bulk_quadrature(mesh, "midpoint")
        b_bulk = qb.basis.T @ (qb.weights * _eval(f_bulk, qb.points, t))
    if f_surf is not None:
        qs = surface_quadrature(mesh, 2)
        b_surf = qs.basis.T @ (qs.weights * coeffs.mu(qs.points, t)
                               * _eval(f_surf, qs.points, t))
    if split:
        return b_bulk, b_surf
    return b_bulk + b_surf


def _eval(f, x, t):
    return np.broadcast_to(np.asarray(f(x, t), dtype=float), (len(x),))


def evaluate_nonlinearity(system: AssembledSystem, u, f_bulk, f_surf) -> np.ndarray:
    """Vector with entries (f_bulk(u_h), φ_i)_Ω + (μ f_surf(u_h), φ_i)_Γ.

    ``f_bulk`` and ``f_surf`` map nodal/pointwise values to values, with
    signature ``f(u, x, t)``. A fully lumped system uses nodal evaluation
    against the lumped diagonals; otherwise the load quadrature is used.
    """
    u = np.asarray(u, dtype=float)
    mesh, t = system.mesh, system.t
    if system.lumping is Lumping.FULL:
        x = mesh.vertices
        out = np.zeros_like(u)
        if f_bulk is not None:
            out += system.M_bulk_diag * f_bulk(u, x, t)
        if f_surf is not None:
            bnd = mesh.boundary_vertices
            out[bnd] += system.M_surf_diag[bnd] * f_surf(u[bnd], x[bnd], t)
        return out
    out = np.zeros_like(u)
    if f_bulk is not None:
        qb = bulk_quadrature(mesh, "midpoint")
        out += qb.basis.T @ (qb.weights * f_bulk(qb.basis @ u, qb.points, t))
    if f_surf is not None:
        qs = surface_quadrature(mesh, 2)
        out += qs.basis.T @ (qs.weights * system.coeffs.mu(qs.points, t)
                             * f_surf(qs.basis @ u, qs.points, t))
    return out


def nonlinearity_jacobian(system: AssembledSystem, u, df_bulk, df_surf) -> sp.csr_matrix:
    """Derivative of :func:`evaluate_nonlinearity` with respect to ``u``."""
    u = np.asarray(u, dtype=float)
    mesh, t = system.mesh, system.t
    n = len(u)
    if system.lumping is Lumping.FULL:
        d = np.zeros(n)
        if df_bulk is not None:
            d += system.M_bulk_diag * df_bulk(u, mesh.vertices, t)
        if df_surf is not None:
            bnd = mesh.boundary_vertices
            d[bnd] += system.M_surf_diag[bnd] * df_surf(u[bnd], mesh.vertices[bnd], t)
        return sp.diags(d).tocsr()
    J = sp.csr_matrix((n, n))
    if df_bulk is not None:
        qb = bulk_quadrature(mesh, "midpoint")
        w = qb.weights * df_bulk(qb.basis @ u, qb.points, t)
        J = J + qb.basis.T @ sp.diags(w) @ qb.basis
    if df_surf is not None:
        qs = surface_quadrature(mesh, 2)
        w = qs.weights * system.coeffs.mu(qs.points, t) * df_surf(qs.basis @ u, qs.points, t)
        J = J + qs.basis.T @ sp.diags(w) @ qs.basis
    return J.tocsr()


def surface_unit_matrices(mesh: Mesh):
    """Boundary-restricted mass (μ=1) and Laplace–Beltrami stiffness (β=1)."""
    bnd = mesh.boundary_vertices
    one = Field.constant(1.0)
    Ms = _edge_weighted_mass(mesh, one, 0.0)[bnd][:, bnd]
    Ks = _edge_stiffness(mesh, one, 0.0)[bnd][:, bnd]
    return Ms.tocsr(), Ks.tocsr()


def write_matrix(A, path) -> None:
    """Write ``i j value`` triplets, lexicographically sorted, 17 significant digits."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        for i, j, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_matrix(path, n: int) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(n, n))
