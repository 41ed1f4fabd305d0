"""Triangulations of the unit square and the unit disk.

A :class:`Mesh` carries its boundary as one counterclockwise loop of edges,
which is all the surface finite elements need: the boundary restriction of
the bulk P1 space is the P1 space on that polyline.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError, InvalidMeshError


class DomainKind(str, enum.Enum):
    SQUARE = "square"
    DISK = "disk"
    EXTERNAL = "external"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D triangulation with a marked boundary loop.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array, consecutive edges of one closed
        counterclockwise loop
    domain_kind : DomainKind
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    domain_kind: DomainKind = DomainKind.EXTERNAL

    def __post_init__(self):
        for name, dtype in (("vertices", float), ("triangles", np.int64),
                            ("boundary_edges", np.int64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "domain_kind", DomainKind(self.domain_kind))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def boundary_vertex_flags(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.boundary_edges.ravel()] = True
        return flags

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Boundary vertex indices in increasing order."""
        return np.flatnonzero(self.boundary_vertex_flags)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex_flags)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def h(self) -> float:
        """Maximal element diameter (longest edge)."""
        return float(self.edge_lengths.max())

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @property
    def perimeter(self) -> float:
        return float(boundary_arclengths(self).sum())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for a in range(3):
            u = p[:, (a + 1) % 3] - p[:, a]
            v = p[:, (a + 2) % 3] - p[:, a]
            c = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(angles))

    def validate(self) -> "Mesh":
        """Check the structural invariants; return self for chaining."""
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidMeshError("vertices must have shape (nv, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise InvalidMeshError("triangles must have shape (nt, 3)")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= self.n_vertices):
            raise InvalidMeshError("triangle index out of range")
        if np.any(self.signed_areas <= 0):
            bad = int(np.argmin(self.signed_areas))
            raise InvalidMeshError(f"triangle {bad} is not counterclockwise")
        be = self.boundary_edges
        if len(be) < 3:
            raise InvalidMeshError("boundary loop needs at least three edges")
        if np.any(be[:, 1] != np.roll(be[:, 0], -1)):
            raise InvalidMeshError("boundary edges do not form a single closed loop")
        if len(np.unique(be[:, 0])) != len(be):
            raise InvalidMeshError("boundary loop visits a vertex twice")
        # Boundary edges are exactly the edges used by one triangle, traversed
        # in the triangle's own (counterclockwise) direction.
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
        if np.any(counts > 2):
            raise InvalidMeshError("non-manifold edge")
        single = {tuple(e) for e in und[counts == 1]}
        if single != {tuple(sorted(e)) for e in be.tolist()}:
            raise InvalidMeshError("boundary_edges differ from the edges with one incident triangle")
        directed_set = {tuple(e) for e in directed.tolist()}
        if not all(tuple(e) in directed_set for e in be.tolist()):
            raise InvalidMeshError("boundary loop is not counterclockwise")
        if self.domain_kind is DomainKind.DISK:
            r = np.hypot(*self.vertices[self.boundary_vertices].T)
            if np.max(np.abs(r - 1.0)) > 1e-12:
                raise InvalidMeshError("disk boundary vertex off the unit circle")
        return self


def generate_square_mesh(n: int) -> Mesh:
    """Structured mesh of [0,1]^2 with ``n`` cells per side.

    Every cell is cut along its south-west/north-east diagonal, so red
    refinement of this mesh reproduces the mesh with ``2n`` cells.
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i + (n + 1) * j

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    tri = np.empty((2 * n * n, 3), dtype=np.int64)
    tri[0::2] = np.column_stack([v00, v10, v11])
    tri[1::2] = np.column_stack([v00, v11, v01])

    k = np.arange(n)
    loop = np.concatenate([
        vid(k, 0),              # bottom, left to right
        vid(n, k),              # right, bottom to top
        vid(n - k, n),          # top, right to left
        vid(0, n - k),          # left, top to bottom
    ])
    edges = np.column_stack([loop, np.roll(loop, -1)])
    return Mesh(vertices, tri, edges, DomainKind.SQUARE)


def _zip_rings(inner, outer, pts):
    """Triangulate the annulus between two rings of vertex indices.

    Both rings are sorted by angle. At each step the shorter of the two
    candidate diagonals is taken.
    """
    ni, no = len(inner), len(outer)
    ang_in = np.arctan2(pts[inner, 1], pts[inner, 0])
    ang_out = np.arctan2(pts[outer, 1], pts[outer, 0])
    # start from the outer vertex angularly closest to inner[0]
    d = np.angle(np.exp(1j * (ang_out - ang_in[0])))
    j0 = int(np.argmin(np.abs(d)))
    tris = []
    a, b = 0, 0
    while a < ni or b < no:
        p = inner[a % ni]
        q = outer[(j0 + b) % no]
        if a == ni:
            choose_outer = True
        elif b == no:
            choose_outer = False
        else:
            q_next = outer[(j0 + b + 1) % no]
            p_next = inner[(a + 1) % ni]
            choose_outer = (np.linalg.norm(pts[p] - pts[q_next])
                            <= np.linalg.norm(pts[p_next] - pts[q]))
        if choose_outer:
            tris.append((p, q, outer[(j0 + b + 1) % no]))
            b += 1
        else:
            tris.append((p, q, inner[(a + 1) % ni]))
            a += 1
    return tris


def generate_disk_mesh(n_boundary: int) -> Mesh:
    """Concentric-ring triangulation of the polygon inscribed in the unit circle.

    Ring ``k`` of ``R`` sits at radius ``k/R`` and carries about
    ``n_boundary * k / R`` equally spaced vertices, with ``R`` chosen so the
    elements are close to equilateral.
    """
    if int(n_boundary) != n_boundary or n_boundary < 6 or n_boundary % 2:
        raise InvalidArgumentError(
            f"n_boundary must be an even integer >= 6, got {n_boundary!r}")
    nb = int(n_boundary)
    n_rings = max(1, int(round(nb * math.sqrt(3.0) / (4.0 * math.pi))))
    pts = [np.zeros(2)]
    rings = []
    for k in range(1, n_rings + 1):
        count = nb if k == n_rings else max(5, int(round(nb * k / n_rings)))
        offset = 0.0 if k == n_rings else (0.5 * (k % 2)) * 2.0 * math.pi / count
        theta = offset + 2.0 * math.pi * np.arange(count) / count
        r = k / n_rings
        start = len(pts)
        ring_pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        if k == n_rings:
            # exact unit-circle vertices; cos/sin round-off stays below 1e-15
            ring_pts /= np.hypot(ring_pts[:, 0], ring_pts[:, 1])[:, None]
        pts.extend(ring_pts)
        rings.append(np.arange(start, start + count))
    pts = np.array(pts)

    tris = []
    first = rings[0]
    for a in range(len(first)):
        tris.append((0, first[a], first[(a + 1) % len(first)]))
    for inner, outer in zip(rings[:-1], rings[1:]):
        tris.extend(_zip_rings(inner, outer, pts))
    tris = np.array(tris, dtype=np.int64)
    # enforce counterclockwise orientation
    p = pts[tris]
    area = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    outer = rings[-1]
    edges = np.column_stack([outer, np.roll(outer, -1)])
    return Mesh(pts, tris, edges, DomainKind.DISK)


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement; disk boundary midpoints are pushed onto the circle."""
    t = mesh.triangles
    nv = mesh.n_vertices
    all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    und, inverse = np.unique(np.sort(all_edges, axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    nt = len(t)
    m01, m12, m20 = (nv + inverse[:nt], nv + inverse[nt:2 * nt], nv + inverse[2 * nt:])
    mid = 0.5 * (mesh.vertices[und[:, 0]] + mesh.vertices[und[:, 1]])

    be = mesh.boundary_edges
    lookup = {tuple(e): k for k, e in enumerate(und.tolist())}
    bmid = np.array([nv + lookup[tuple(sorted(e))] for e in be.tolist()], dtype=np.int64)
    if mesh.domain_kind is DomainKind.DISK:
        idx = bmid - nv
        mid[idx] /= np.hypot(mid[idx, 0], mid[idx, 1])[:, None]

    vertices = np.vstack([mesh.vertices, mid])
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    new = np.empty((4 * nt, 3), dtype=np.int64)
    new[0::4] = np.column_stack([a, m01, m20])
    new[1::4] = np.column_stack([b, m12, m01])
    new[2::4] = np.column_stack([c, m20, m12])
    new[3::4] = np.column_stack([m01, m12, m20])
    edges = np.empty((2 * len(be), 2), dtype=np.int64)
    edges[0::2] = np.column_stack([be[:, 0], bmid])
    edges[1::2] = np.column_stack([bmid, be[:, 1]])
    return Mesh(vertices, new, edges, mesh.domain_kind)


def boundary_arclengths(mesh: Mesh) -> np.ndarray:
    """Boundary edge lengths in loop order."""
    be = mesh.boundary_edges
    d = mesh.vertices[be[:, 1]] - mesh.vertices[be[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def build_mesh(kind, n: int) -> Mesh:
    """Mesh at resolution level ``n``: ``n`` cells per side for the square,
    ``4n`` boundary vertices for the disk (same boundary edge count)."""
    kind = DomainKind(kind)
    if kind is DomainKind.SQUARE:
        return generate_square_mesh(n)
    if kind is DomainKind.DISK:
        return generate_disk_mesh(4 * n)
    raise InvalidArgumentError("external meshes are loaded from file, not built")


def mesh_ladder(kind, levels) -> list:
    """Meshes for a refinement study.

    Where consecutive levels double, the finer mesh is the red refinement of
    the coarser one, so disk families stay nested.
    """
    levels = [int(n) for n in levels]
    meshes = []
    for i, n in enumerate(levels):
        if i > 0 and n == 2 * levels[i - 1]:
            meshes.append(refine(meshes[-1]))
        else:
            meshes.append(build_mesh(kind, n))
    return meshes


# -- text format --------------------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    """Write ``nv nt nb`` header, vertices, triangles, boundary loop."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for i, j in mesh.boundary_edges:
            fh.write(f"{i} {j}\n")


def read_mesh(path, domain_kind=DomainKind.EXTERNAL) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    try:
        nv, nt, nb = (int(v) for v in lines[0])
        verts = np.array([[float(v) for v in ln] for ln in lines[1:1 + nv]])
        tris = np.array([[int(v) for v in ln] for ln in lines[1 + nv:1 + nv + nt]])
        bnd = np.array([[int(v) for v in ln] for ln in lines[1 + nv + nt:1 + nv + nt + nb]])
    except (ValueError, IndexError) as exc:
        raise InvalidMeshError(f"malformed mesh file {path}: {exc}") from exc
    if verts.shape != (nv, 2) or tris.shape != (nt, 3) or bnd.shape != (nb, 2):
        raise InvalidMeshError(f"mesh file {path}: counts do not match header")
    return Mesh(verts, tris, bnd, domain_kind).validate()
