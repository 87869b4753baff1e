"""Global sparse operators and load vectors of the discrete three-field system.

All bilinear forms are assembled exactly: broken strains and divergences of
the displacement space are piecewise constant, flux basis products are
quadratic (degree-2 rule), and face jump products are quadratic along each
face (2-point Gauss).  Load vectors use a degree-4 volume rule so that
trigonometric manufactured sources are integrated accurately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bc import BoundarySpec
from .mesh import Mesh
from .spaces import barycentric_coords, cr_gradients, edge_rule, tri_rule


@dataclass(frozen=True)
class MaterialField:
    """Per-cell material data: Lame parameters, hydraulic conductivity, and
    the jump-stabilization constant."""

    lam: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray  # hydraulic conductivity K = permeability / viscosity
    gamma1: float = 0.5

    def __post_init__(self):
        for name in ("lam", "mu", "kappa"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.mu <= 0):
            raise ValueError("shear modulus must be positive")
        if np.any(self.lam < 0):
            raise ValueError("first Lame parameter must be nonnegative")
        if np.any(self.kappa <= 0):
            raise ValueError("hydraulic conductivity must be positive")
        if self.gamma1 < 0:
            raise ValueError("jump stabilization constant must be nonnegative")

    @classmethod
    def homogeneous(cls, n_cells: int, lam: float, mu: float, kappa: float,
                    gamma1: float = 0.5) -> "MaterialField":
        return cls(np.full(n_cells, float(lam)), np.full(n_cells, float(mu)),
                   np.full(n_cells, float(kappa)), gamma1)


class TripletMatrix:
    """Row/col/value accumulator; duplicate entries sum on finalization."""

    def __init__(self, n_rows: int, n_cols: int):
        self.shape = (n_rows, n_cols)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, i: int, j: int, v: float) -> None:
        self._rows.append(np.array([i], dtype=np.int64))
        self._cols.append(np.array([j], dtype=np.int64))
        self._vals.append(np.array([v], dtype=float))

    def add_many(self, rows, cols, vals) -> None:
        self._rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self._cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self._vals.append(np.asarray(vals, dtype=float).ravel())

    def add_dense(self, row_dofs, col_dofs, block) -> None:
        row_dofs = np.asarray(row_dofs, dtype=np.int64)
        col_dofs = np.asarray(col_dofs, dtype=np.int64)
        rows = np.repeat(row_dofs, col_dofs.size)
        cols = np.tile(col_dofs, row_dofs.size)
        self.add_many(rows, cols, np.asarray(block, dtype=float))

    def tocsr(self) -> sp.csr_matrix:
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.empty(0, dtype=np.int64)
            vals = np.empty(0)
        if rows.size and (rows.min() < 0 or rows.max() >= self.shape[0]
                          or cols.min() < 0 or cols.max() >= self.shape[1]):
            raise IndexError("triplet index outside matrix shape")
        return sp.coo_matrix((vals, (rows, cols)), shape=self.shape).tocsr()


def _interleaved_u_dofs(mesh: Mesh) -> np.ndarray:
    """Per-cell displacement dofs ordered (face0 x, face0 y, face1 x, ...)."""
    dofs = np.empty((mesh.n_cells, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.cell_faces
    dofs[:, 1::2] = 2 * mesh.cell_faces + 1
    return dofs


def assemble_elasticity(mesh: Mesh, material: MaterialField) -> TripletMatrix:
    """Broken-strain elastic form 2 mu (eps:eps) + lam (div)(div)."""
    grads = cr_gradients(mesh)  # (m, 3, 2)
    gg = np.einsum("cak,cbk->cab", grads, grads)
    eye = np.eye(2)
    mu_a = material.mu * mesh.areas
    lam_a = material.lam * mesh.areas
    local = (
        np.einsum("c,cab,ij->caibj", mu_a, gg, eye)
        + np.einsum("c,caj,cbi->caibj", mu_a, grads, grads)
        + np.einsum("c,cai,cbj->caibj", lam_a, grads, grads)
    ).reshape(mesh.n_cells, 6, 6)

    dofs = _interleaved_u_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1)
    cols = np.tile(dofs, (1, 6))
    out = TripletMatrix(2 * mesh.n_faces, 2 * mesh.n_faces)
    out.add_many(rows, cols, local)
    return out


def assemble_jump(mesh: Mesh, material: MaterialField, boundary_faces=None,
                  normal_only: bool = False) -> TripletMatrix:
    """Face-jump stabilization 2 mu gamma1 sum_e h_e^-1 int_e [v].[w].

    Interior faces are always penalized.  ``boundary_faces`` selects the
    boundary faces whose traces are penalized against zero data: None means
    every boundary face, an empty sequence restricts to interior faces only.
    ``normal_only`` penalizes just the normal component of the jump.
    """
    if boundary_faces is None:
        boundary_faces = mesh.boundary_faces
    boundary_set = set(int(f) for f in boundary_faces)
    rule = edge_rule(2)
    out = TripletMatrix(2 * mesh.n_faces, 2 * mesh.n_faces)
    if material.gamma1 == 0.0:
        return out

    pa = mesh.vertices[mesh.face_vertices[:, 0]]
    pb = mesh.vertices[mesh.face_vertices[:, 1]]

    for f in range(mesh.n_faces):
        t_minus = int(mesh.face_t_minus[f])
        if t_minus < 0 and f not in boundary_set:
            continue
        xq = pa[f] + rule.points[:, :1] * (pb[f] - pa[f])  # (nq, 2)

        t_plus = int(mesh.face_t_plus[f])
        cells = [t_plus] if t_minus < 0 else [t_plus, t_minus]
        cols = []
        coeff = []  # per cell: (nq, 3) CR values, sign +1 / -1
        for side, c in enumerate(cells):
            lam = barycentric_coords(mesh, c, xq)
            vals = 1.0 - 2.0 * lam
            coeff.append(vals if side == 0 else -vals)
            cols.append(mesh.cell_faces[c])
        jump = np.concatenate(coeff, axis=1)  # (nq, 3 or 6) scalar jump rows
        dofs = np.concatenate(cols)

        mu_e = material.mu[cells].mean()
        # h_e^-1 cancels against the |e| of the edge integral
        scalar = 2.0 * mu_e * material.gamma1 * np.einsum("q,qa,qb->ab", rule.weights, jump, jump)

        n = dofs.size
        block = np.zeros((2 * n, 2 * n))
        if normal_only:
            nvec = mesh.face_normals[f]
            for i in range(2):
                for j in range(2):
                    block[i::2, j::2] = nvec[i] * nvec[j] * scalar
        else:
            block[0::2, 0::2] = scalar
            block[1::2, 1::2] = scalar
        vec_dofs = np.empty(2 * n, dtype=np.int64)
        vec_dofs[0::2] = 2 * dofs
        vec_dofs[1::2] = 2 * dofs + 1
        out.add_dense(vec_dofs, vec_dofs, block)
    return out


def assemble_div_u(mesh: Mesh) -> TripletMatrix:
    """Cell integrals of the displacement divergence, (n_p x n_u)."""
    grads = cr_gradients(mesh)
    vals = np.empty((mesh.n_cells, 6))
    vals[:, 0::2] = mesh.areas[:, None] * grads[:, :, 0]
    vals[:, 1::2] = mesh.areas[:, None] * grads[:, :, 1]
    dofs = _interleaved_u_dofs(mesh)
    rows = np.repeat(np.arange(mesh.n_cells, dtype=np.int64), 6)
    out = TripletMatrix(mesh.n_cells, 2 * mesh.n_faces)
    out.add_many(rows, dofs, vals)
    return out


def assemble_div_w(mesh: Mesh) -> TripletMatrix:
    """Cell integrals of the flux divergence: the signed incidence matrix."""
    rows = np.repeat(np.arange(mesh.n_cells, dtype=np.int64), 3)
    out = TripletMatrix(mesh.n_cells, mesh.n_faces)
    out.add_many(rows, mesh.cell_faces, mesh.cell_face_signs.astype(float))
    return out


def assemble_rt_mass_consistent(mesh: Mesh, material: MaterialField) -> TripletMatrix:
    """Exact weighted mass matrix int K^-1 psi_e . psi_e' of the flux space."""
    rule = tri_rule(2)
    verts = mesh.vertices[mesh.cells]  # (m, 3, 2); vertex a is opposite face a
    xq = np.einsum("qa,cav->cqv", rule.points, verts)  # (m, nq, 2)
    diff = xq[:, :, None, :] - verts[:, None, :, :]  # (m, nq, 3, 2)
    pair = np.einsum("q,cqav,cqbv->cab", rule.weights, diff, diff)
    signs = mesh.cell_face_signs.astype(float)
    scale = material.kappa ** -1 * mesh.areas / (4.0 * mesh.areas ** 2)
    local = np.einsum("c,ca,cb,cab->cab", scale, signs, signs, pair)
    rows = np.repeat(mesh.cell_faces, 3, axis=1)
    cols = np.tile(mesh.cell_faces, (1, 3))
    out = TripletMatrix(mesh.n_faces, mesh.n_faces)
    out.add_many(rows, cols, local)
    return out


def face_conductivities(mesh: Mesh, material: MaterialField,
                        tol: float = 1e-10) -> np.ndarray:
    """Distance-weighted harmonic mean of the cell conductivities per face.

    Boundary faces take the conductivity of their only cell; faces with a
    vanishing circumcenter distance fall back to the plus cell's value (the
    result is multiplied by a zero weight downstream anyway).
    """
    k_plus = material.kappa[mesh.face_t_plus]
    out = k_plus.copy()
    interior = ~mesh.is_boundary_face
    k_minus = np.ones_like(out)
    k_minus[interior] = material.kappa[mesh.face_t_minus[interior]]
    denom = mesh.face_d_plus / k_plus + mesh.face_d_minus / k_minus
    ok = interior & (np.abs(mesh.face_d) >= tol * mesh.face_lengths) & (np.abs(denom) > 1e-300)
    out[ok] = mesh.face_d[ok] / denom[ok]
    return out


def face_conductivity(face: int, mesh: Mesh, material: MaterialField) -> float:
    return float(face_conductivities(mesh, material)[face])


def assemble_rt_mass_lumped(mesh: Mesh, material: MaterialField,
                            degenerate=()) -> np.ndarray:
    """Diagonal lumped flux mass built from circumcenter distances.

    The entry for face e is K_e^-1 * d_e / |e|, acting on integral flux
    dofs; this is the unique diagonal reproducing int K^-1 w.r exactly for
    piecewise-constant flux fields in 2D.  Entries of degenerate faces
    (d_e = 0) are zeroed; the system module removes those unknowns.
    """
    diag = mesh.face_d / mesh.face_lengths / face_conductivities(mesh, material)
    diag = np.asarray(diag, dtype=float)
    if len(degenerate):
        diag[np.asarray(degenerate, dtype=np.int64)] = 0.0
    return diag


def assemble_load_g(mesh: Mesh, body_force, bc: BoundarySpec | None, time: float) -> np.ndarray:
    """Load vector int g . v plus traction terms int t . v on loaded segments.

    ``body_force`` is a vectorized callback (x, y, t) -> (gx, gy) or None.
    """
    vec = np.zeros(2 * mesh.n_faces)
    if body_force is not None:
        rule = tri_rule(4)
        verts = mesh.vertices[mesh.cells]
        xq = np.einsum("qa,cav->cqv", rule.points, verts)
        gx, gy = body_force(xq[:, :, 0], xq[:, :, 1], time)
        gx = np.broadcast_to(np.asarray(gx, dtype=float), xq.shape[:2])
        gy = np.broadcast_to(np.asarray(gy, dtype=float), xq.shape[:2])
        phi = 1.0 - 2.0 * rule.points  # (nq, 3), same in every cell
        cx = np.einsum("c,q,cq,qa->ca", mesh.areas, rule.weights, gx, phi)
        cy = np.einsum("c,q,cq,qa->ca", mesh.areas, rule.weights, gy, phi)
        np.add.at(vec, 2 * mesh.cell_faces, cx)
        np.add.at(vec, 2 * mesh.cell_faces + 1, cy)

    if bc is not None:
        rule = edge_rule(2)
        for f, tvec in bc.traction_faces(mesh):
            a = mesh.vertices[mesh.face_vertices[f, 0]]
            b = mesh.vertices[mesh.face_vertices[f, 1]]
            xq = a + rule.points[:, :1] * (b - a)
            cell = int(mesh.face_t_plus[f])
            vals = 1.0 - 2.0 * barycentric_coords(mesh, cell, xq)  # (nq, 3)
            base = mesh.face_lengths[f] * rule.weights @ vals  # (3,)
            vec[2 * mesh.cell_faces[cell]] += tvec[0] * base
            vec[2 * mesh.cell_faces[cell] + 1] += tvec[1] * base
    return vec


def assemble_source_f(mesh: Mesh, source, time: float) -> np.ndarray:
    """Cell integrals of the fluid source; ``source`` is (x, y, t) -> f or None."""
    if source is None:
        return np.zeros(mesh.n_cells)
    rule = tri_rule(4)
    verts = mesh.vertices[mesh.cells]
    xq = np.einsum("qa,cav->cqv", rule.points, verts)
    fv = np.broadcast_to(np.asarray(source(xq[:, :, 0], xq[:, :, 1], time), dtype=float),
                         xq.shape[:2])
    return mesh.areas * np.einsum("q,cq->c", rule.weights, fv)


def lame_from_E_nu(E: float, nu: float) -> tuple[float, float]:
    """Lame parameters from Young's modulus and Poisson ratio."""
    if E <= 0:
        raise ValueError("Young's modulus must be positive")
    if not -1.0 < nu < 0.5:
        raise ValueError("Poisson ratio must lie in (-1, 0.5)")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return lam, mu
