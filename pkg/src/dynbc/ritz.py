"""Ritz projection, error norms and convergence rates."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .assembly import (AssembledSystem, Field, Lumping, _lumped_bulk_diag, _lumped_surf_diag,
                       assemble, surface_unit_matrices)
from .linalg import Factorized, HMinusHalf
from .quadrature import arc_derivative, bulk_gradients, bulk_quadrature, surface_quadrature

ERROR_RULE = "degree4"
ERROR_GAUSS = 3


def default_shift(mesh, coeffs, t) -> float:
    """c = 0 if κ > 0 at every sampled boundary point, else |κ_min| + 1."""
    q = surface_quadrature(mesh, ERROR_GAUSS)
    pts = np.vstack([q.points, mesh.vertices[mesh.boundary_vertices]])
    kmin = float(np.min(coeffs.kappa(pts, t)))
    return 0.0 if kmin > 0 else abs(kmin) + 1.0


def _consistent(system: AssembledSystem) -> AssembledSystem:
    if system.lumping is Lumping.CONSISTENT:
        return system
    return assemble(system.mesh, system.coeffs, system.t, Lumping.CONSISTENT)


def ritz_rhs(exact, mesh, coeffs, t, shift: float) -> np.ndarray:
    """ρ_i = a(u, φ_i) + c·m(u, φ_i) by quadrature of the exact closures."""
    n = mesh.n_vertices
    qb = bulk_quadrature(mesh, ERROR_RULE)
    g = bulk_gradients(mesh)
    wgrad = qb.weights[:, None] * exact.grad_u(qb.points, t)
    int_grad = np.zeros((mesh.n_triangles, 2))
    np.add.at(int_grad, qb.element, wgrad)
    rho = np.bincount(mesh.triangles.ravel(),
                      np.einsum("tad,td->ta", g, int_grad).ravel(), minlength=n)
    qs = surface_quadrature(mesh, ERROR_GAUSS)
    u_s = exact.u(qs.points, t)
    react = coeffs.kappa(qs.points, t)
    if shift:
        react = react + shift * coeffs.mu(qs.points, t)
        rho += shift * (qb.basis.T @ (qb.weights * exact.u(qb.points, t)))
    rho += qs.basis.T @ (qs.weights * react * u_s)
    if not coeffs.beta.is_zero:
        ds_u = np.einsum("id,id->i", exact.grad_u(qs.points, t), qs.tangent)
        edge_int = np.bincount(qs.edge, qs.weights * coeffs.beta(qs.points, t) * ds_u,
                               minlength=len(mesh.boundary_edges))
        rho += arc_derivative(mesh).T @ edge_int
    return rho


def ritz_project(exact, system: AssembledSystem, shift=None, t=None,
                 return_residual: bool = False):
    """Nodal vector r with a(r, φ_i) + c m(r, φ_i) = a(u, φ_i) + c m(u, φ_i).

    The forms are those of ``system``; the exact solution is evaluated at
    ``t`` (default ``system.t``, which differs only when the system was
    assembled once for time-independent coefficients). Uses consistent mass
    even when ``system`` is lumped, since the projection is defined by the
    exact forms.
    """
    mesh, coeffs = system.mesh, system.coeffs
    t = system.t if t is None else float(t)
    c = default_shift(mesh, coeffs, system.t) if shift is None else float(shift)

    def build():
        sysc = _consistent(system)
        K = (sysc.A + c * sysc.M).tocsr() if c else sysc.A
        # direct factorization: the projection serves as an exact reference
        return K, Factorized(K)

    K, fac = system._memo(("ritz", c), build)
    rho = ritz_rhs(exact, mesh, coeffs, t, c)
    r = fac.solve(rho)
    if return_residual:
        res = np.max(np.abs(K @ r - rho)) / max(np.max(np.abs(rho)), 1e-300)
        return r, res
    return r


@lru_cache(maxsize=32)
def _hminus(mesh):
    return HMinusHalf(*surface_unit_matrices(mesh))


def error_norms(u_h, exact, mesh, coeffs, t, shift=None, with_hminus: bool = True) -> dict:
    """Errors of the finite element function ``u_h`` against ``exact`` at time ``t``.

    Returns a dict with ``L2_bulk``, ``L2_surf`` (unweighted), ``H_combined``
    (norm of m), ``energy`` (square root of a(e,e) + c m(e,e)) and
    ``Hminus_half_surf`` (from the nodal boundary error).
    """
    u_h = np.asarray(u_h, dtype=float)
    qb = bulk_quadrature(mesh, ERROR_RULE)
    qs = surface_quadrature(mesh, ERROR_GAUSS)
    eb = qb.basis @ u_h - exact.u(qb.points, t)
    es = qs.basis @ u_h - exact.u(qs.points, t)
    l2b = np.sum(qb.weights * eb ** 2)
    l2s = np.sum(qs.weights * es ** 2)
    l2s_mu = np.sum(qs.weights * coeffs.mu(qs.points, t) * es ** 2)

    g = bulk_gradients(mesh)
    grad_h = np.einsum("tad,ta->td", g, u_h[mesh.triangles])[qb.element]
    eg = grad_h - exact.grad_u(qb.points, t)
    semi = np.sum(qb.weights * np.einsum("id,id->i", eg, eg))
    semi += np.sum(qs.weights * coeffs.kappa(qs.points, t) * es ** 2)
    if not coeffs.beta.is_zero:
        ds_h = (arc_derivative(mesh) @ u_h)[qs.edge]
        eds = ds_h - np.einsum("id,id->i", exact.grad_u(qs.points, t), qs.tangent)
        semi += np.sum(qs.weights * coeffs.beta(qs.points, t) * eds ** 2)
    c = default_shift(mesh, coeffs, t) if shift is None else float(shift)
    energy2 = semi + c * (l2b + l2s_mu)

    out = {"L2_bulk": float(np.sqrt(l2b)), "L2_surf": float(np.sqrt(l2s)),
           "H_combined": float(np.sqrt(l2b + l2s_mu)),
           "energy": float(np.sqrt(max(energy2, 0.0)))}
    if with_hminus:
        bnd = mesh.boundary_vertices
        gerr = u_h[bnd] - exact.u(mesh.vertices[bnd], t)
        out["Hminus_half_surf"] = _hminus(mesh)(gerr)
    return out


NORM_NAMES = ("L2_bulk", "L2_surf", "H_combined", "energy", "Hminus_half_surf")


def mass_norm(v, M) -> float:
    """|v|_M = (vᵀMv)^{1/2}."""
    return float(np.sqrt(max(float(v @ (M @ v)), 0.0)))


def eoc(sizes, errors) -> np.ndarray:
    """Pairwise rates log(e_{i−1}/e_i)/log(h_{i−1}/h_i); NaN where undefined."""
    h = np.asarray(sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 2:
        return np.array([])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    r[~np.isfinite(r)] = np.nan
    return r


def discrete_energy(u, system: AssembledSystem, potentials=None) -> float:
    """½uᵀAu plus lumped quadrature of the bulk and surface potentials.

    ``potentials`` is a pair ``(W, W_Γ)`` of functions of the nodal value
    (either may be ``None``), or an object with ``potential_bulk`` and
    ``potential_surf`` attributes.
    """
    u = np.asarray(u, dtype=float)
    E = 0.5 * float(u @ (system.A @ u))
    if potentials is None:
        return E
    if hasattr(potentials, "potential_bulk"):
        W, WG = potentials.potential_bulk, potentials.potential_surf
    else:
        W, WG = potentials
    mesh = system.mesh
    if W is not None:
        E += float(_lumped_bulk_diag(mesh) @ W(u))
    if WG is not None:
        bnd = mesh.boundary_vertices
        w = _lumped_surf_diag(mesh, Field.constant(1.0), system.t)[bnd]
        E += float(w @ WG(u[bnd]))
    return E
