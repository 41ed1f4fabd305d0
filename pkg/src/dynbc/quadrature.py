"""Quadrature rules on triangles and boundary edges, with per-mesh caches.

Each cached rule carries a sparse "basis matrix" ``P`` whose row ``q`` holds
the values of the nodal basis at quadrature point ``q``; then
``P @ u`` evaluates a finite element function and ``P.T @ (w * f)`` tests a
pointwise field against every basis function.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError

# Six-point rule exact for polynomials of degree 4 (barycentric orbits).
_D4_A = (0.445948490915965, 0.108103018168070, 0.223381589678011)
_D4_B = (0.091576213509771, 0.816847572980459, 0.109951743655322)


def triangle_rule(name: str):
    """Barycentric points and weights (summing to 1) on a reference triangle.

    ``vertex``: trapezoidal, degree 1. ``midpoint``: edge midpoints, degree 2.
    ``degree4``: six points, degree 4.
    """
    if name == "vertex":
        return np.eye(3), np.full(3, 1.0 / 3.0)
    if name == "midpoint":
        bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return bary, np.full(3, 1.0 / 3.0)
    if name == "degree4":
        pts, wts = [], []
        for a, b, w in (_D4_A, _D4_B):
            for k in range(3):
                p = [a, a, a]
                p[k] = b
                pts.append(p)
                wts.append(w)
        wts = np.array(wts)
        return np.array(pts), wts / wts.sum()
    raise InvalidArgumentError(f"unknown triangle rule {name!r}")


def edge_rule(npts: int):
    """Gauss-Legendre nodes in [0, 1] and weights summing to 1."""
    if npts < 1:
        raise InvalidArgumentError("need at least one Gauss point")
    s, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (s + 1.0), 0.5 * w


@dataclass(frozen=True)
class BulkQuadrature:
    points: np.ndarray      # (nq, 2)
    weights: np.ndarray     # (nq,) physical weights, sum = area
    element: np.ndarray     # (nq,) triangle index of each point
    basis: sp.csr_matrix    # (nq, nv)


@dataclass(frozen=True)
class SurfaceQuadrature:
    points: np.ndarray      # (nq, 2)
    weights: np.ndarray     # (nq,) physical weights, sum = perimeter
    edge: np.ndarray        # (nq,) boundary edge index (loop order)
    tangent: np.ndarray     # (nq, 2) unit tangent of the chord, loop direction
    normal: np.ndarray      # (nq, 2) outward unit normal of the chord
    basis: sp.csr_matrix    # (nq, nv)


@lru_cache(maxsize=64)
def bulk_quadrature(mesh, rule: str = "midpoint") -> BulkQuadrature:
    bary, w = triangle_rule(rule)
    tri = mesh.triangles
    nt, nq = len(tri), len(w)
    xyz = mesh.vertices[tri]                               # (nt, 3, 2)
    pts = np.einsum("qa,tad->tqd", bary, xyz).reshape(-1, 2)
    weights = (mesh.signed_areas[:, None] * w[None, :]).ravel()
    rows = np.repeat(np.arange(nt * nq), 3)
    cols = np.repeat(tri, nq, axis=0).ravel()
    vals = np.tile(bary, (nt, 1)).ravel()
    P = sp.csr_matrix((vals, (rows, cols)), shape=(nt * nq, mesh.n_vertices))
    return BulkQuadrature(pts, weights, np.repeat(np.arange(nt), nq), P)


@lru_cache(maxsize=64)
def surface_quadrature(mesh, npts: int = 2) -> SurfaceQuadrature:
    s, w = edge_rule(npts)
    be = mesh.boundary_edges
    nb = len(be)
    x0, x1 = mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]]
    d = x1 - x0
    ell = np.hypot(d[:, 0], d[:, 1])
    t = d / ell[:, None]
    pts = (x0[:, None, :] + s[None, :, None] * d[:, None, :]).reshape(-1, 2)
    weights = (ell[:, None] * w[None, :]).ravel()
    rows = np.repeat(np.arange(nb * npts), 2)
    cols = np.repeat(be, npts, axis=0).ravel()
    vals = np.tile(np.column_stack([1.0 - s, s]), (nb, 1)).ravel()
    P = sp.csr_matrix((vals, (rows, cols)), shape=(nb * npts, mesh.n_vertices))
    tq = np.repeat(t, npts, axis=0)
    nq = np.column_stack([tq[:, 1], -tq[:, 0]])
    return SurfaceQuadrature(pts, weights, np.repeat(np.arange(nb), npts), tq, nq, P)


@lru_cache(maxsize=64)
def bulk_gradients(mesh):
    """Constant gradients of the three barycentric functions per triangle, (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.signed_areas
    # grad lambda_a = rot90(x_c - x_b) / (2 area)
    g = np.empty((len(p), 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e = p[:, c] - p[:, b]
        g[:, a, 0] = -e[:, 1] / area2
        g[:, a, 1] = e[:, 0] / area2
    return g


@lru_cache(maxsize=64)
def arc_derivative(mesh) -> sp.csr_matrix:
    """Matrix mapping nodal values to the tangential derivative on each boundary edge."""
    be = mesh.boundary_edges
    nb = len(be)
    ell = np.hypot(*(mesh.vertices[be[:, 1]] - mesh.vertices[be[:, 0]]).T)
    rows = np.repeat(np.arange(nb), 2)
    vals = np.column_stack([-1.0 / ell, 1.0 / ell]).ravel()
    return sp.csr_matrix((vals, (rows, be.ravel())), shape=(nb, mesh.n_vertices))
