"""Legacy-VTK ASCII export of meshes, cell scalars and vertex vectors."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_vtk(path, mesh: Mesh, cell_data: dict | None = None,
              point_data: dict | None = None, title: str = "biotfem output") -> None:
    """Write an unstructured-grid file with triangle cells (VTK type 5).

    ``cell_data`` maps names to per-cell scalars; ``point_data`` maps names
    to (n_vertices, 2) vector arrays, padded with a zero z component.
    """
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")

        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{_fmt(x)} {_fmt(y)} 0\n")

        fh.write(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}\n")
        for a, b, c in mesh.cells:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        fh.write("5\n" * mesh.n_cells)

        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_cells}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in np.asarray(values, dtype=float):
                    fh.write(_fmt(v) + "\n")

        if point_data:
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=float)
                fh.write(f"VECTORS {name} double\n")
                for vx, vy in values:
                    fh.write(f"{_fmt(vx)} {_fmt(vy)} 0\n")


def displacement_at_vertices(mesh: Mesh, u_dofs: np.ndarray) -> np.ndarray:
    """Vertex displacement vectors averaged from the incident face dofs."""
    sums = np.zeros((mesh.n_vertices, 2))
    counts = np.zeros(mesh.n_vertices)
    for f in range(mesh.n_faces):
        for v in mesh.face_vertices[f]:
            sums[v, 0] += u_dofs[2 * f]
            sums[v, 1] += u_dofs[2 * f + 1]
            counts[v] += 1
    return sums / counts[:, None]
