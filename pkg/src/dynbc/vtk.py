"""Legacy ASCII VTK output for P1 fields on triangle meshes."""
from __future__ import annotations

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, mesh, point_data=None, title: str = "dynbc") -> None:
    """Write an UNSTRUCTURED_GRID with one SCALARS block per nodal field."""
    point_data = point_data or {}
    nv, nt = mesh.n_vertices, mesh.n_triangles
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write(f"{VTK_TRIANGLE}\n" * nt)
        if point_data:
            fh.write(f"POINT_DATA {nv}\n")
            for name, vals in point_data.items():
                vals = np.asarray(vals, dtype=float)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("".join(f"{v:.17g}\n" for v in vals))


def read_vtk_scalars(path) -> dict:
    """Point scalars of a file written by :func:`write_vtk` (for round-trip checks)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out, i = {}, 0
    npts = 0
    while i < len(tokens):
        line = tokens[i].split()
        if line and line[0] == "POINT_DATA":
            npts = int(line[1])
        if line and line[0] == "SCALARS":
            name = line[1]
            vals = np.array([float(v) for v in tokens[i + 2:i + 2 + npts]])
            out[name] = vals
            i += 2 + npts
            continue
        i += 1
    return out
