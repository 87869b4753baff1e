"""Structured triangulations with oriented faces and circumcenter data.

Cells are counterclockwise vertex triples.  Every face carries a fixed unit
normal: the plus cell ``t_plus`` is the first (lowest-index) cell touching
the face and the normal points out of it, so for an interior face the
normal points from the lower toward the higher cell index.  Boundary faces
have ``t_minus = -1`` and an outward normal.

Faces also store the signed distances from the adjacent circumcenters
(Voronoi vertices) to the face line; their sum ``d_e`` defines the
per-face lumping weight ``omega_e = |e| * d_e / 2``, the area of the
Voronoi kite straddling the face.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

log = logging.getLogger(__name__)

# local face i of a cell is opposite local vertex i; endpoints in CCW order
LOCAL_FACES = ((1, 2), (2, 0), (0, 1))


class Segment(Enum):
    """Boundary segment labels of a rectangular domain."""

    BOTTOM = "bottom"
    RIGHT = "right"
    TOP = "top"
    LEFT = "left"
    INTERIOR = "interior"


class Diagonal(Enum):
    """Which diagonal splits each grid rectangle into two triangles."""

    SW_NE = "sw-ne"
    ALTERNATING = "alternating"


@dataclass(frozen=True)
class Face:
    """One mesh face (edge) with orientation and dual-grid geometry."""

    index: int
    endpoints: tuple[int, int]
    normal: tuple[float, float]
    length: float
    t_plus: int
    t_minus: Optional[int]
    barycenter: tuple[float, float]
    d_plus: float
    d_minus: float
    d_e: float
    omega_e: float
    tag: Segment

    @property
    def is_boundary(self) -> bool:
        return self.t_minus is None


def triangle_circumcenter(points) -> np.ndarray:
    """Circumcenter of one triangle; raises ValueError for collinear vertices."""
    a, b, c = np.asarray(points, dtype=float)
    d1, d2 = b - a, c - a
    det = d1[0] * d2[1] - d1[1] * d2[0]
    scale = max(np.abs(d1).max(), np.abs(d2).max(), 1e-300)
    if abs(det) < 1e-14 * scale * scale:
        raise ValueError("cannot compute circumcenter of collinear vertices")
    r1 = (b @ b - a @ a) / 2.0
    r2 = (c @ c - a @ a) / 2.0
    return np.array([(r1 * d2[1] - r2 * d1[1]) / det, (d1[0] * r2 - d2[0] * r1) / det])


class Mesh:
    """Immutable triangle mesh with face adjacency and Voronoi distances.

    Construction derives all face topology, orientations, lengths,
    circumcenter distances and lumping weights.  Instances are safe for
    concurrent read access; all arrays are marked read-only.
    """

    def __init__(self, vertices, cells, boundary_tag: Callable[[np.ndarray], Segment]):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise ValueError("cells must be an (m, 3) array")

        v = self.vertices[self.cells]  # (m, 3, 2)
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(cross <= 0.0):
            bad = int(np.argmax(cross <= 0.0))
            raise ValueError(f"cell {bad} is degenerate or not counterclockwise")
        self.areas = 0.5 * cross

        # circumcenters, vectorized over cells
        r1 = 0.5 * ((v[:, 1] ** 2).sum(1) - (v[:, 0] ** 2).sum(1))
        r2 = 0.5 * ((v[:, 2] ** 2).sum(1) - (v[:, 0] ** 2).sum(1))
        cx = (r1 * d2[:, 1] - r2 * d1[:, 1]) / cross
        cy = (d1[:, 0] * r2 - d2[:, 0] * r1) / cross
        self.cell_circumcenters = np.column_stack([cx, cy])
        self.cell_barycenters = v.mean(axis=1)

        self._build_faces(boundary_tag)
        for arr in (
            self.vertices, self.cells, self.areas, self.cell_circumcenters,
            self.cell_barycenters, self.face_vertices, self.face_normals,
            self.face_lengths, self.face_t_plus, self.face_t_minus,
            self.face_barycenters, self.face_d_plus, self.face_d_minus,
            self.face_d, self.face_omega, self.cell_faces, self.cell_face_signs,
        ):
            arr.setflags(write=False)

    def _build_faces(self, boundary_tag):
        n_cells = self.n_cells
        key_to_idx: dict[tuple[int, int], int] = {}
        endpoints: list[tuple[int, int]] = []
        t_plus: list[int] = []
        t_minus: list[int] = []
        self.cell_faces = np.empty((n_cells, 3), dtype=np.int64)
        self.cell_face_signs = np.empty((n_cells, 3), dtype=np.int8)

        for c in range(n_cells):
            for li, (la, lb) in enumerate(LOCAL_FACES):
                a = int(self.cells[c, la])
                b = int(self.cells[c, lb])
                key = (a, b) if a < b else (b, a)
                idx = key_to_idx.get(key)
                if idx is None:
                    idx = len(endpoints)
                    key_to_idx[key] = idx
                    endpoints.append((a, b))
                    t_plus.append(c)
                    t_minus.append(-1)
                    sign = 1
                else:
                    if t_minus[idx] != -1:
                        raise ValueError(f"face {key} shared by more than two cells")
                    t_minus[idx] = c
                    sign = -1
                self.cell_faces[c, li] = idx
                self.cell_face_signs[c, li] = sign

        self.face_vertices = np.array(endpoints, dtype=np.int64)
        self.face_t_plus = np.array(t_plus, dtype=np.int64)
        self.face_t_minus = np.array(t_minus, dtype=np.int64)

        pa = self.vertices[self.face_vertices[:, 0]]
        pb = self.vertices[self.face_vertices[:, 1]]
        tang = pb - pa
        self.face_lengths = np.hypot(tang[:, 0], tang[:, 1])
        # endpoints are stored in the plus cell's CCW order, so rotating the
        # tangent by -90 degrees gives the normal pointing out of t_plus
        self.face_normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / self.face_lengths[:, None]
        self.face_barycenters = 0.5 * (pa + pb)

        cplus = self.cell_circumcenters[self.face_t_plus]
        self.face_d_plus = ((self.face_barycenters - cplus) * self.face_normals).sum(1)
        interior = self.face_t_minus >= 0
        self.face_d_minus = np.zeros(self.n_faces)
        cminus = self.cell_circumcenters[self.face_t_minus[interior]]
        self.face_d_minus[interior] = (
            (cminus - self.face_barycenters[interior]) * self.face_normals[interior]
        ).sum(1)
        self.face_d = self.face_d_plus + self.face_d_minus
        self.face_omega = 0.5 * self.face_lengths * self.face_d

        negative = int((self.face_omega < -1e-14 * self.face_lengths ** 2).sum())
        if negative:
            log.warning("%d faces have negative lumping weights (circumcenters "
                        "outside their cells); lumped mass may be indefinite", negative)

        tags = []
        for f in range(self.n_faces):
            if interior[f]:
                tags.append(Segment.INTERIOR)
            else:
                tag = boundary_tag(self.face_barycenters[f])
                if not isinstance(tag, Segment) or tag is Segment.INTERIOR:
                    raise ValueError(f"invalid boundary tag {tag!r} for face {f}")
                tags.append(tag)
        self.face_tags = tuple(tags)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_vertices.shape[0] if hasattr(self, "face_vertices") else 0

    @property
    def is_boundary_face(self) -> np.ndarray:
        return self.face_t_minus < 0

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary_face)

    @cached_property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary_face)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        """Per-cell inverse of [P1-P0, P2-P0], mapping physical to barycentric."""
        v = self.vertices[self.cells]
        jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
        return np.linalg.inv(jac)

    @cached_property
    def faces(self) -> tuple[Face, ...]:
        out = []
        for f in range(self.n_faces):
            tm = int(self.face_t_minus[f])
            out.append(Face(
                index=f,
                endpoints=(int(self.face_vertices[f, 0]), int(self.face_vertices[f, 1])),
                normal=(float(self.face_normals[f, 0]), float(self.face_normals[f, 1])),
                length=float(self.face_lengths[f]),
                t_plus=int(self.face_t_plus[f]),
                t_minus=None if tm < 0 else tm,
                barycenter=(float(self.face_barycenters[f, 0]), float(self.face_barycenters[f, 1])),
                d_plus=float(self.face_d_plus[f]),
                d_minus=float(self.face_d_minus[f]),
                d_e=float(self.face_d[f]),
                omega_e=float(self.face_omega[f]),
                tag=self.face_tags[f],
            ))
        return tuple(out)

    def face(self, index: int) -> Face:
        return self.faces[index]


def build_structured_mesh(nx: int, ny: int, domain=(0.0, 0.0, 1.0, 1.0),
                          diagonal: Diagonal = Diagonal.SW_NE) -> Mesh:
    """Triangulate an nx-by-ny rectangular grid by splitting each rectangle.

    Produces 2*nx*ny cells and 3*nx*ny + nx + ny faces with boundary faces
    tagged by the rectangle side they lie on.
    """
    if not (isinstance(nx, (int, np.integer)) and isinstance(ny, (int, np.integer))):
        raise ValueError("nx and ny must be integers")
    if nx < 1 or ny < 1:
        raise ValueError(f"grid must have at least one cell per direction, got {nx}x{ny}")
    x0, y0, x1, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain rectangle {domain}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)  # row j = constant y
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if diagonal is Diagonal.SW_NE or (i + j) % 2 == 0:
                cells.append((a, b, c))
                cells.append((a, c, d))
            else:
                cells.append((a, b, d))
                cells.append((b, c, d))

    tol = 1e-12 * max(x1 - x0, y1 - y0)

    def tagger(p):
        if abs(p[1] - y0) < tol:
            return Segment.BOTTOM
        if abs(p[0] - x1) < tol:
            return Segment.RIGHT
        if abs(p[1] - y1) < tol:
            return Segment.TOP
        if abs(p[0] - x0) < tol:
            return Segment.LEFT
        raise ValueError(f"boundary face barycenter {p} not on any domain side")

    return Mesh(vertices, cells, tagger)


def mesh_from_cells(vertices, cells,
                    boundary_tag: Union[Segment, Callable[[np.ndarray], Segment]] = Segment.BOTTOM) -> Mesh:
    """Mesh from explicit vertex/cell arrays, mainly for test fixtures.

    ``boundary_tag`` is either a fixed segment label for every boundary face
    or a callable mapping the face barycenter to a label.
    """
    if isinstance(boundary_tag, Segment):
        fixed = boundary_tag
        boundary_tag = lambda p: fixed  # noqa: E731
    return Mesh(vertices, cells, boundary_tag)


def circumcenter(cell: int, mesh: Mesh) -> np.ndarray:
    """Circumcenter of one mesh cell, equidistant from its three vertices."""
    return triangle_circumcenter(mesh.vertices[mesh.cells[cell]])


def lumping_weight(face: int, mesh: Mesh) -> float:
    """Voronoi kite area |e| * d_e / 2 associated with one face."""
    return float(mesh.face_omega[face])


def degenerate_faces(mesh: Mesh, tol: float = 1e-10) -> list[int]:
    """Interior faces whose circumcenter distance vanishes (|d_e| < tol*|e|)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    sel = (~mesh.is_boundary_face) & (np.abs(mesh.face_d) < tol * mesh.face_lengths)
    return [int(f) for f in np.flatnonzero(sel)]
