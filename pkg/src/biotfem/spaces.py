"""Reference bases, quadrature and degree-of-freedom maps for the three fields.

Displacements: vector nonconforming linears with one value per face
barycenter and component (dofs 2f, 2f+1 for face f).  Fluxes: lowest-order
Raviart-Thomas with one signed normal-flux integral per face, stored in the
direction of the global face normal.  Pressures: one constant per cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bc import BoundarySpec, Clamped, Impermeable
from .mesh import Mesh


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and unit weights (scaled by |T| or |e| at use sites)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


_SQ3 = np.sqrt(3.0)


@lru_cache(maxsize=None)
def tri_rule(degree: int) -> QuadratureRule:
    """Symmetric triangle rule exact for polynomials up to ``degree``."""
    if degree <= 1:
        pts = np.array([[1 / 3, 1 / 3, 1 / 3]])
        wts = np.array([1.0])
    elif degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        wts = np.full(3, 1 / 3)
    elif degree <= 4:
        a, b = 0.445948490915965, 0.091576213509771
        wa, wb = 0.223381589678011, 0.109951743655322
        pts = np.array([
            [a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
            [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b],
        ])
        wts = np.array([wa, wa, wa, wb, wb, wb])
    else:
        raise ValueError(f"no triangle rule of degree {degree}")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def edge_rule(n_points: int) -> QuadratureRule:
    """Gauss rule on [0, 1]; points returned as (s, 1-s) pairs."""
    if n_points == 1:
        s = np.array([0.5])
        w = np.array([1.0])
    elif n_points == 2:
        s = np.array([0.5 - 0.5 / _SQ3, 0.5 + 0.5 / _SQ3])
        w = np.array([0.5, 0.5])
    elif n_points == 3:
        c = 0.5 * np.sqrt(3 / 5)
        s = np.array([0.5 - c, 0.5, 0.5 + c])
        w = np.array([5 / 18, 8 / 18, 5 / 18])
    else:
        raise ValueError(f"no edge rule with {n_points} points")
    pts = np.column_stack([s, 1 - s])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * n_points - 1)


def cr_basis_eval(local_face: int, bary) -> np.ndarray:
    """Nonconforming linear basis 1 - 2*lambda_i at barycentric coordinates."""
    if local_face not in (0, 1, 2):
        raise ValueError(f"local face index {local_face} outside 0..2")
    bary = np.asarray(bary, dtype=float)
    return 1.0 - 2.0 * bary[..., local_face]


def cr_gradients(mesh: Mesh) -> np.ndarray:
    """Per-cell constant gradients of the three scalar CR basis functions, (m,3,2)."""
    v = mesh.vertices[mesh.cells]
    grads = np.empty((mesh.n_cells, 3, 2))
    for i in range(3):
        e = v[:, (i + 2) % 3] - v[:, (i + 1) % 3]
        # grad lambda_i = rot90(e) / (2A); CR basis gradient is -2 grad lambda_i
        grads[:, i, 0] = e[:, 1] / mesh.areas
        grads[:, i, 1] = -e[:, 0] / mesh.areas
    return grads


def barycentric_coords(mesh: Mesh, cell: int, points) -> np.ndarray:
    """Barycentric coordinates of physical points with respect to one cell."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rel = pts - mesh.vertices[mesh.cells[cell, 0]]
    lam12 = rel @ mesh.inverse_jacobians[cell].T
    lam0 = 1.0 - lam12.sum(axis=1)
    return np.column_stack([lam0, lam12])


def _local_face_on_cell(mesh: Mesh, cell: int, face: int) -> int:
    row = mesh.cell_faces[cell]
    hits = np.flatnonzero(row == face)
    if hits.size == 0:
        raise ValueError(f"face {face} is not a face of cell {cell}")
    return int(hits[0])


def rt0_basis_eval(cell: int, face: int, point, mesh: Mesh) -> np.ndarray:
    """Raviart-Thomas basis dual to the signed face-flux functionals.

    On the cell the basis is sign/(2|T|) * (x - P), with P the vertex
    opposite the face and sign the orientation of the global face normal
    relative to the cell's outward normal.
    """
    local = _local_face_on_cell(mesh, cell, face)
    sign = float(mesh.cell_face_signs[cell, local])
    opposite = mesh.vertices[mesh.cells[cell, local]]
    point = np.asarray(point, dtype=float)
    return sign / (2.0 * mesh.areas[cell]) * (point - opposite)


def rt0_div(cell: int, face: int, mesh: Mesh) -> float:
    """Constant divergence sign/|T| of one Raviart-Thomas basis on one cell."""
    local = _local_face_on_cell(mesh, cell, face)
    return float(mesh.cell_face_signs[cell, local]) / float(mesh.areas[cell])


@dataclass(frozen=True)
class DofMap:
    """Dof counts and essential (strongly constrained) dof sets."""

    n_u: int
    n_w: int
    n_p: int
    essential_u: np.ndarray
    essential_w: np.ndarray

    @staticmethod
    def u_dofs_of_face(face: int) -> tuple[int, int]:
        return 2 * face, 2 * face + 1

    @property
    def free_u(self) -> np.ndarray:
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.essential_u] = False
        return np.flatnonzero(mask)

    @property
    def free_w(self) -> np.ndarray:
        mask = np.ones(self.n_w, dtype=bool)
        mask[self.essential_w] = False
        return np.flatnonzero(mask)


def build_dof_map(mesh: Mesh, bc: BoundarySpec) -> DofMap:
    """Dof map with essential sets from clamped/impermeable boundary segments."""
    bc.check_covers(mesh)
    ess_u: list[int] = []
    ess_w: list[int] = []
    for f in mesh.boundary_faces:
        seg = bc.segment(mesh.face_tags[f])
        if isinstance(seg.displacement, Clamped):
            ess_u.extend((2 * int(f), 2 * int(f) + 1))
        if isinstance(seg.flow, Impermeable):
            ess_w.append(int(f))
    return DofMap(
        n_u=2 * mesh.n_faces,
        n_w=mesh.n_faces,
        n_p=mesh.n_cells,
        essential_u=np.asarray(sorted(ess_u), dtype=np.int64),
        essential_w=np.asarray(sorted(ess_w), dtype=np.int64),
    )
