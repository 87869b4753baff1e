"""Backward-Euler time stepping of the coupled three-field system.

Each step solves the symmetric block system

    [ A     0      -B1^T ] [u]   [ g    ]
    [ 0     tau*Mw -tau*B2^T ] [w] = [ 0    ]
    [ -B1  -tau*B2   0   ] [p]   [ f~   ]

with f~ = tau*f(t_n) - B1 u^{n-1}, essential displacement/flux dofs
eliminated symmetrically, and (in lumped mode) pressure unknowns of cells
joined by a degenerate face merged into one.  The factorization is cached:
the operator does not depend on time, only the right-hand side does.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    MaterialField,
    assemble_div_u,
    assemble_div_w,
    assemble_elasticity,
    assemble_jump,
    assemble_load_g,
    assemble_rt_mass_consistent,
    assemble_rt_mass_lumped,
    assemble_source_f,
)
from .bc import BoundarySpec
from .mesh import Mesh, degenerate_faces
from .spaces import DofMap, build_dof_map


class MassMode(str, Enum):
    CONSISTENT = "consistent"
    LUMPED = "lumped"


class SolverError(RuntimeError):
    """Raised when a linear solve fails or its residual is unacceptable."""


@dataclass
class State:
    """Coefficient vectors of the three fields at one time level."""

    u: np.ndarray
    w: np.ndarray
    p: np.ndarray
    t: float

    def write_csv(self, path) -> None:
        """Checkpoint: field,index,value rows; dofs are in face/cell index order."""
        with open(path, "w") as fh:
            fh.write("# biotfem state checkpoint\n")
            fh.write(f"# t={self.t:.17g}\n")
            fh.write(f"# n_u={self.u.size} n_w={self.w.size} n_p={self.p.size}\n")
            fh.write("field,index,value\n")
            for name, vec in (("u", self.u), ("w", self.w), ("p", self.p)):
                for i, v in enumerate(vec):
                    fh.write(f"{name},{i},{v:.17g}\n")

    @classmethod
    def read_csv(cls, path) -> "State":
        t = 0.0
        data: dict[str, list[float]] = {"u": [], "w": [], "p": []}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("# t="):
                    t = float(line[4:])
                    continue
                if not line or line.startswith("#") or line.startswith("field,"):
                    continue
                name, _, value = line.split(",")
                data[name].append(float(value))
        return cls(np.array(data["u"]), np.array(data["w"]), np.array(data["p"]), t)


def _refined_solve(lu, matrix, rhs: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """LU solve polished by iterative refinement; badly scaled saddle-point
    blocks (stiff elasticity against tiny conductivities) lose digits that a
    few residual corrections recover."""
    x = lu.solve(rhs)
    best = x
    best_resid = np.linalg.norm(matrix @ x - rhs)
    for _ in range(sweeps):
        if best_resid == 0.0:
            break
        x = best + lu.solve(rhs - matrix @ best)
        resid = np.linalg.norm(matrix @ x - rhs)
        if not resid < best_resid:
            break
        best, best_resid = x, resid
    return best


def solve_sparse(matrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse factorization solve with a residual sanity check."""
    matrix = sp.csc_matrix(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        raise SolverError(f"matrix is not square: {matrix.shape}")
    try:
        lu = spla.splu(matrix)
        x = _refined_solve(lu, matrix, rhs)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse solve produced non-finite values (singular system?)")
    resid = np.linalg.norm(matrix @ x - rhs)
    if resid > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise SolverError(f"sparse solve residual too large: {resid:.3e}")
    return x


def merge_degenerate_pressures(mesh: Mesh, faces) -> np.ndarray:
    """Union-find merge of the pressure dofs joined by degenerate faces.

    Returns the representative cell of every cell (the smallest index of
    its merged class).  A cycle among degenerate faces cannot occur on a
    triangulation of a disk and is rejected.
    """
    parent = np.arange(mesh.n_cells, dtype=np.int64)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for f in faces:
        a = find(int(mesh.face_t_plus[f]))
        b = find(int(mesh.face_t_minus[f]))
        if a == b:
            raise SolverError("degenerate faces form a cycle; cannot merge pressures")
        parent[max(a, b)] = min(a, b)

    return np.array([find(i) for i in range(mesh.n_cells)], dtype=np.int64)


class BiotSystem:
    """Assembled operators and elimination data for one fixed step size."""

    def __init__(self, mesh: Mesh, material: MaterialField, bc: BoundarySpec,
                 dofmap: DofMap, tau: float, mass_mode: MassMode,
                 A, Mw, B1, B2, rep: np.ndarray, removed_w: np.ndarray,
                 penalized_boundary: np.ndarray):
        self.mesh = mesh
        self.material = material
        self.bc = bc
        self.dofmap = dofmap
        self.tau = tau
        self.mass_mode = mass_mode
        self.A = A
        self.Mw = Mw  # csr for consistent mode, 1-d diagonal for lumped
        self.B1 = B1
        self.B2 = B2
        self.rep = rep
        self.removed_w = removed_w
        self.penalized_boundary = penalized_boundary

        reps = np.unique(rep)
        self.group_of = np.searchsorted(reps, rep)  # cell -> merged dof
        self.n_pm = reps.size
        self.P = sp.coo_matrix(
            (np.ones(mesh.n_cells), (self.group_of, np.arange(mesh.n_cells))),
            shape=(self.n_pm, mesh.n_cells)).tocsr()

        free_w_mask = np.ones(dofmap.n_w, dtype=bool)
        free_w_mask[dofmap.essential_w] = False
        free_w_mask[removed_w] = False
        self.free_u = dofmap.free_u
        self.free_w = np.flatnonzero(free_w_mask)

        if mass_mode is MassMode.LUMPED and np.any(self.Mw[self.free_w] <= 0.0):
            raise SolverError("nonpositive lumped mass on a retained flux dof")

        self.B1m = (self.P @ B1).tocsr()
        self.B2m = (self.P @ B2).tocsr()
        self._lu = None
        self._matrix = None

    @property
    def n_unknowns(self) -> int:
        return self.free_u.size + self.free_w.size + self.n_pm

    def block_matrix(self) -> sp.csc_matrix:
        """Symmetric block operator over the retained (free) unknowns."""
        if self._matrix is None:
            A_ff = self.A[self.free_u][:, self.free_u]
            if self.mass_mode is MassMode.LUMPED:
                Mw_ff = sp.diags(self.Mw[self.free_w])
            else:
                Mw_ff = self.Mw[self.free_w][:, self.free_w]
            B1f = self.B1m[:, self.free_u]
            B2f = self.B2m[:, self.free_w]
            tau = self.tau
            self._matrix = sp.bmat(
                [[A_ff, None, -B1f.T],
                 [None, tau * Mw_ff, -tau * B2f.T],
                 [-B1f, -tau * B2f, None]], format="csc")
        return self._matrix

    def _solve_free(self, rhs: np.ndarray) -> np.ndarray:
        K = self.block_matrix()
        if self._lu is None:
            try:
                self._lu = spla.splu(K)
            except RuntimeError as exc:
                raise SolverError(
                    "time-step system is singular (is any boundary segment "
                    f"clamped?): {exc}") from exc
        x = _refined_solve(self._lu, K, rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("time-step solve produced non-finite values")
        resid = np.linalg.norm(K @ x - rhs)
        if resid > 1e-9 * max(1.0, np.linalg.norm(rhs)):
            raise SolverError(f"time-step residual {resid:.3e} exceeds tolerance")
        return x


def build_system(mesh: Mesh, material: MaterialField, bc: BoundarySpec, tau: float,
                 mass_mode: MassMode = MassMode.LUMPED, *,
                 jump_scope: str = "clamped", jump_normal_only: bool = False,
                 degenerate_tol: float = 1e-10) -> BiotSystem:
    """Assemble all operators of the fully discrete scheme for step size tau.

    ``jump_scope`` selects the boundary faces entering the stabilization:
    "clamped" (default) penalizes traces on clamped segments only, "all"
    penalizes every boundary face, "interior" none.
    """
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    mass_mode = MassMode(mass_mode)
    dofmap = build_dof_map(mesh, bc)

    if jump_scope == "clamped":
        penalized = bc.clamped_faces(mesh)
    elif jump_scope == "all":
        penalized = mesh.boundary_faces
    elif jump_scope == "interior":
        penalized = np.empty(0, dtype=np.int64)
    else:
        raise ValueError(f"unknown jump scope {jump_scope!r}")

    A = (assemble_elasticity(mesh, material).tocsr()
         + assemble_jump(mesh, material, penalized, jump_normal_only).tocsr())
    B1 = assemble_div_u(mesh).tocsr()
    B2 = assemble_div_w(mesh).tocsr()

    if mass_mode is MassMode.LUMPED:
        removed = np.asarray(degenerate_faces(mesh, degenerate_tol), dtype=np.int64)
        Mw = assemble_rt_mass_lumped(mesh, material, removed)
        rep = merge_degenerate_pressures(mesh, removed)
    else:
        removed = np.empty(0, dtype=np.int64)
        Mw = assemble_rt_mass_consistent(mesh, material).tocsr()
        rep = np.arange(mesh.n_cells, dtype=np.int64)

    return BiotSystem(mesh, material, bc, dofmap, float(tau), mass_mode,
                      A, Mw, B1, B2, rep, removed, penalized)


def _reconstruct_removed_fluxes(system: BiotSystem, u: np.ndarray, u_prev: np.ndarray,
                                w: np.ndarray, f_vec: np.ndarray) -> None:
    """Recover fluxes of removed degenerate faces from single-cell balances.

    Peels leaves of the forest formed by cells connected through degenerate
    faces; each leaf cell's mass balance determines its one unknown flux.
    """
    if system.removed_w.size == 0:
        return
    mesh = system.mesh
    target = -f_vec - (system.B1 @ (u - u_prev)) / system.tau
    acc = system.B2 @ w  # divergence contributions of resolved fluxes

    pending: dict[int, set[int]] = {}
    for f in system.removed_w:
        for c in (int(mesh.face_t_plus[f]), int(mesh.face_t_minus[f])):
            pending.setdefault(c, set()).add(int(f))
    queue = [c for c, fs in pending.items() if len(fs) == 1]
    resolved = 0
    while queue:
        c = queue.pop()
        faces = pending.get(c)
        if not faces or len(faces) != 1:
            continue
        f = faces.pop()
        sign = 1.0 if int(mesh.face_t_plus[f]) == c else -1.0
        w[f] = sign * (target[c] - acc[c])
        resolved += 1
        tp, tm = int(mesh.face_t_plus[f]), int(mesh.face_t_minus[f])
        acc[tp] += w[f]
        acc[tm] -= w[f]
        other = tm if c == tp else tp
        pending[other].discard(f)
        if len(pending[other]) == 1:
            queue.append(other)
    if resolved != system.removed_w.size:
        raise SolverError("could not reconstruct all degenerate-face fluxes")


def step(system: BiotSystem, state_prev: State, g_vec: np.ndarray,
         f_vec: np.ndarray) -> State:
    """Advance one backward-Euler step given assembled load vectors at t_n."""
    tau = system.tau
    ftil = system.P @ (tau * f_vec - system.B1 @ state_prev.u)
    rhs = np.concatenate([g_vec[system.free_u],
                          np.zeros(system.free_w.size),
                          ftil])
    x = system._solve_free(rhs)

    nfu, nfw = system.free_u.size, system.free_w.size
    u = np.zeros(system.dofmap.n_u)
    u[system.free_u] = x[:nfu]
    w = np.zeros(system.dofmap.n_w)
    w[system.free_w] = x[nfu:nfu + nfw]
    p = x[nfu + nfw:][system.group_of]

    _reconstruct_removed_fluxes(system, u, state_prev.u, w, f_vec)
    return State(u, w, p, state_prev.t + tau)


def run_transient(system: BiotSystem, initial: State, body_force, source,
                  n_t: int) -> list[State]:
    """Run n_t sequential steps; load callbacks are evaluated at t_n = t0 + n*tau."""
    states = [initial]
    for n in range(1, n_t + 1):
        t_n = initial.t + n * system.tau
        g_vec = assemble_load_g(system.mesh, body_force, system.bc, t_n)
        f_vec = assemble_source_f(system.mesh, source, t_n)
        try:
            states.append(step(system, states[-1], g_vec, f_vec))
        except SolverError as exc:
            raise SolverError(f"step {n} (t={t_n:g}) failed: {exc}") from exc
    return states


class ReducedDarcySystem:
    """Two-field operator with the flux eliminated through the lumped mass.

    Solves [A, -B1^T; -B1, -tau*B2*Mw^-1*B2^T] for (u, p) and recovers the
    flux from w = Mw^-1 B2^T p.
    """

    def __init__(self, system: BiotSystem):
        if system.mass_mode is not MassMode.LUMPED:
            raise ValueError("flux elimination requires the lumped mass mode")
        self.system = system
        minv = 1.0 / system.Mw[system.free_w]
        B2f = system.B2m[:, system.free_w]
        self._minv = minv
        self._B2f = B2f
        self.schur = (-system.tau * (B2f @ sp.diags(minv) @ B2f.T)).tocsr()
        A_ff = system.A[system.free_u][:, system.free_u]
        B1f = system.B1m[:, system.free_u]
        self.matrix = sp.bmat([[A_ff, -B1f.T], [-B1f, self.schur]], format="csc")
        self._lu = None

    def step(self, state_prev: State, g_vec: np.ndarray, f_vec: np.ndarray) -> State:
        sysm = self.system
        tau = sysm.tau
        ftil = sysm.P @ (tau * f_vec - sysm.B1 @ state_prev.u)
        rhs = np.concatenate([g_vec[sysm.free_u], ftil])
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise SolverError(f"reduced system is singular: {exc}") from exc
        x = _refined_solve(self._lu, self.matrix, rhs)
        resid = np.linalg.norm(self.matrix @ x - rhs)
        if resid > 1e-9 * max(1.0, np.linalg.norm(rhs)):
            raise SolverError(f"reduced-system residual {resid:.3e} exceeds tolerance")

        nfu = sysm.free_u.size
        u = np.zeros(sysm.dofmap.n_u)
        u[sysm.free_u] = x[:nfu]
        pm = x[nfu:]
        p = pm[sysm.group_of]
        w = np.zeros(sysm.dofmap.n_w)
        w[sysm.free_w] = self._minv * (self._B2f.T @ pm)
        _reconstruct_removed_fluxes(sysm, u, state_prev.u, w, f_vec)
        return State(u, w, p, state_prev.t + sysm.tau)


def eliminate_darcy(system: BiotSystem) -> ReducedDarcySystem:
    """Schur-eliminate the flux unknowns of a lumped-mode system."""
    return ReducedDarcySystem(system)
