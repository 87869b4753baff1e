"""Manufactured solutions, error norms, and the two reference experiments.

The convergence study drives the solver with closed-form trigonometric
fields whose induced sources are derived symbolically; errors are measured
in the stabilized energy norm for the displacement and the L2 norm for the
pressure.  The footing experiment loads the drained top edge of the unit
square for a single small step at low permeability and quantifies spurious
pressure undershoot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sym

from .assembly import MaterialField, lame_from_E_nu
from .bc import BoundarySpec, Clamped, Drained, Impermeable, SegmentBC, Traction
from .mesh import Diagonal, Mesh, Segment, build_structured_mesh
from .spaces import barycentric_coords, cr_gradients, edge_rule, tri_rule
from .system import MassMode, State, build_system, run_transient

_X, _Y, _T = sym.symbols("x y t")


def _vectorized(expr):
    fn = sym.lambdify((_X, _Y, _T), expr, modules="numpy")

    def wrapped(x, y, t):
        out = fn(x, y, t)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x)).copy()

    return wrapped


class ExactSolution:
    """Closed-form space-time fields (u, v, p) with derived flux w = -K grad p.

    Built from sympy expressions in x, y, t; all evaluation callbacks are
    vectorized over numpy arrays.
    """

    def __init__(self, u_expr, v_expr, p_expr, kappa: float = 1.0):
        self.u_expr, self.v_expr, self.p_expr = u_expr, v_expr, p_expr
        self.kappa = float(kappa)
        self.u = _vectorized(u_expr)
        self.v = _vectorized(v_expr)
        self.p = _vectorized(p_expr)
        self.du_dx = _vectorized(sym.diff(u_expr, _X))
        self.du_dy = _vectorized(sym.diff(u_expr, _Y))
        self.dv_dx = _vectorized(sym.diff(v_expr, _X))
        self.dv_dy = _vectorized(sym.diff(v_expr, _Y))
        self.w_x = _vectorized(-kappa * sym.diff(p_expr, _X))
        self.w_y = _vectorized(-kappa * sym.diff(p_expr, _Y))


def trig_consolidation_solution(kappa: float = 1.0) -> ExactSolution:
    """The reference analytic fields of the convergence experiment."""
    u = sym.exp(-_T) * sym.sin(sym.pi * _X) * sym.sin(sym.pi * _Y)
    p = sym.exp(-_T) * (sym.cos(sym.pi * _Y) + 1)
    return ExactSolution(u, u, p, kappa)


def manufactured_sources(exact: ExactSolution, material: MaterialField):
    """Body force and fluid source making the exact fields solve the model.

    g = -div(2 mu eps(u) + lam div(u) I) + grad p and
    f = -div u_t - div w with w = -K grad p, derived symbolically.
    Requires homogeneous material parameters.
    """
    for name in ("lam", "mu", "kappa"):
        arr = getattr(material, name)
        if np.ptp(arr) > 1e-12 * max(1.0, np.abs(arr).max()):
            raise ValueError("manufactured sources require homogeneous material")
    lam, mu = float(material.lam[0]), float(material.mu[0])
    kappa = float(material.kappa[0])

    u, v, p = exact.u_expr, exact.v_expr, exact.p_expr
    div_u = sym.diff(u, _X) + sym.diff(v, _Y)
    s_xx = 2 * mu * sym.diff(u, _X) + lam * div_u
    s_yy = 2 * mu * sym.diff(v, _Y) + lam * div_u
    s_xy = mu * (sym.diff(u, _Y) + sym.diff(v, _X))
    g1 = sym.simplify(-(sym.diff(s_xx, _X) + sym.diff(s_xy, _Y)) + sym.diff(p, _X))
    g2 = sym.simplify(-(sym.diff(s_xy, _X) + sym.diff(s_yy, _Y)) + sym.diff(p, _Y))
    w_div = -kappa * (sym.diff(p, _X, 2) + sym.diff(p, _Y, 2))
    f = sym.simplify(-sym.diff(div_u, _T) - w_div)

    g1_fn, g2_fn, f_fn = _vectorized(g1), _vectorized(g2), _vectorized(f)

    def g(x, y, t):
        return g1_fn(x, y, t), g2_fn(x, y, t)

    return g, f_fn


def cr_interpolate(mesh: Mesh, exact: ExactSolution, time: float) -> np.ndarray:
    """Displacement dofs from exact values at the face barycenters."""
    bx, by = mesh.face_barycenters[:, 0], mesh.face_barycenters[:, 1]
    dofs = np.empty(2 * mesh.n_faces)
    dofs[0::2] = exact.u(bx, by, time)
    dofs[1::2] = exact.v(bx, by, time)
    return dofs


def _uh_cell_values(mesh: Mesh, u_dofs: np.ndarray, cell: int, points) -> np.ndarray:
    """Values of the broken-linear displacement on one cell, (n, 2)."""
    vals = 1.0 - 2.0 * barycentric_coords(mesh, cell, points)  # (n, 3)
    faces = mesh.cell_faces[cell]
    return np.stack([vals @ u_dofs[2 * faces], vals @ u_dofs[2 * faces + 1]], axis=-1)


def energy_norm_error(state: State, exact: ExactSolution, mesh: Mesh,
                      material: MaterialField, time: float,
                      boundary_faces=None) -> float:
    """Stabilized energy norm of the displacement error.

    Broken strain and divergence terms use a degree-4 rule; jump terms are
    measured on interior faces plus the given boundary faces (None = all),
    with the exact trace entering at the face quadrature points.
    """
    rule = tri_rule(4)
    verts = mesh.vertices[mesh.cells]
    xq = np.einsum("qa,cav->cqv", rule.points, verts)  # (m, nq, 2)
    x, y = xq[:, :, 0], xq[:, :, 1]

    grads = cr_gradients(mesh)
    faces = mesh.cell_faces
    gh = np.empty((mesh.n_cells, 2, 2))  # gh[c, i, j] = d u_h,i / d x_j
    gh[:, 0, :] = np.einsum("ca,cav->cv", state.u[2 * faces], grads)
    gh[:, 1, :] = np.einsum("ca,cav->cv", state.u[2 * faces + 1], grads)

    e11 = exact.du_dx(x, y, time) - gh[:, None, 0, 0]
    e12 = exact.du_dy(x, y, time) - gh[:, None, 0, 1]
    e21 = exact.dv_dx(x, y, time) - gh[:, None, 1, 0]
    e22 = exact.dv_dy(x, y, time) - gh[:, None, 1, 1]
    eps12 = 0.5 * (e12 + e21)
    dens = (2.0 * material.mu[:, None] * (e11 ** 2 + e22 ** 2 + 2.0 * eps12 ** 2)
            + material.lam[:, None] * (e11 + e22) ** 2)
    total = float(np.einsum("c,q,cq->", mesh.areas, rule.weights, dens))

    if boundary_faces is None:
        boundary_faces = mesh.boundary_faces
    boundary_set = set(int(f) for f in boundary_faces)
    erule = edge_rule(3)
    pa = mesh.vertices[mesh.face_vertices[:, 0]]
    pb = mesh.vertices[mesh.face_vertices[:, 1]]
    for f in range(mesh.n_faces):
        tm = int(mesh.face_t_minus[f])
        if tm < 0 and f not in boundary_set:
            continue
        xq = pa[f] + erule.points[:, :1] * (pb[f] - pa[f])
        tp = int(mesh.face_t_plus[f])
        err_plus = np.stack([exact.u(xq[:, 0], xq[:, 1], time),
                             exact.v(xq[:, 0], xq[:, 1], time)], axis=-1)
        err_plus -= _uh_cell_values(mesh, state.u, tp, xq)
        if tm >= 0:
            err_minus = np.stack([exact.u(xq[:, 0], xq[:, 1], time),
                                  exact.v(xq[:, 0], xq[:, 1], time)], axis=-1)
            err_minus -= _uh_cell_values(mesh, state.u, tm, xq)
            jump = err_plus - err_minus
            mu_e = 0.5 * (material.mu[tp] + material.mu[tm])
        else:
            jump = err_plus
            mu_e = material.mu[tp]
        # the 1/h_e weight cancels the |e| of the edge integral
        total += 2.0 * mu_e * material.gamma1 * float(
            erule.weights @ (jump ** 2).sum(axis=1))
    return np.sqrt(total)


def l2_pressure_error(state: State, exact: ExactSolution, mesh: Mesh,
                      time: float) -> float:
    """L2 norm of the pressure error against the piecewise-constant field."""
    rule = tri_rule(4)
    verts = mesh.vertices[mesh.cells]
    xq = np.einsum("qa,cav->cqv", rule.points, verts)
    diff = exact.p(xq[:, :, 0], xq[:, :, 1], time) - state.p[:, None]
    return float(np.sqrt(np.einsum("c,q,cq->", mesh.areas, rule.weights, diff ** 2)))


def convergence_bc() -> BoundarySpec:
    """Clamped everywhere; drained top edge, impermeable elsewhere."""
    drained_top = SegmentBC(Clamped(), Drained(0.0))
    sealed = SegmentBC(Clamped(), Impermeable())
    return BoundarySpec({Segment.BOTTOM: sealed, Segment.RIGHT: sealed,
                         Segment.LEFT: sealed, Segment.TOP: drained_top})


def footing_bc(load: float = -1.0) -> BoundarySpec:
    """Uniform vertical load and drainage on top; rigid sealed sides."""
    top = SegmentBC(Traction((0.0, load)), Drained(0.0))
    sealed = SegmentBC(Clamped(), Impermeable())
    return BoundarySpec({Segment.BOTTOM: sealed, Segment.RIGHT: sealed,
                         Segment.LEFT: sealed, Segment.TOP: top})


@dataclass
class LevelResult:
    nx: int
    n_t: int
    tau: float
    err_u: float
    err_p: float
    rate_u: Optional[float] = None
    rate_p: Optional[float] = None


@dataclass
class ConvergenceReport:
    """Errors and observed rates of a refinement study, plus run metadata."""

    levels: list[LevelResult] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def compute_rates(self) -> None:
        for prev, cur in zip(self.levels, self.levels[1:]):
            cur.rate_u = float(np.log2(prev.err_u / cur.err_u))
            cur.rate_p = float(np.log2(prev.err_p / cur.err_p))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("nx,tau,err_u_energy,err_p_l2,rate_u,rate_p\n")
            for lv in self.levels:
                ru = "" if lv.rate_u is None else f"{lv.rate_u:.17g}"
                rp = "" if lv.rate_p is None else f"{lv.rate_p:.17g}"
                fh.write(f"{lv.nx},{lv.tau:.17g},{lv.err_u:.17g},{lv.err_p:.17g},{ru},{rp}\n")

    def format_table(self) -> str:
        head = "grid".ljust(18) + "".join(
            f"{lv.nx}x{lv.nx}x{lv.n_t}".rjust(14) for lv in self.levels)
        row_u = "|u-u_h|_a".ljust(18) + "".join(
            f"{lv.err_u:14.4f}" for lv in self.levels)
        row_p = "|p-p_h|".ljust(18) + "".join(
            f"{lv.err_p:14.4f}" for lv in self.levels)
        fmt = lambda r: "             -" if r is None else f"{r:14.2f}"  # noqa: E731
        row_ru = "rate(u)".ljust(18) + "".join(fmt(lv.rate_u) for lv in self.levels)
        row_rp = "rate(p)".ljust(18) + "".join(fmt(lv.rate_p) for lv in self.levels)
        return "\n".join([head, row_u, row_p, row_ru, row_rp])


def convergence_study(levels, mass_mode: MassMode = MassMode.LUMPED, *,
                      E: float = 1.0, nu: float = 0.2, kappa: float = 1.0,
                      gamma1: float = 0.5, final_time: float = 1.0,
                      diagonal: Diagonal = Diagonal.SW_NE,
                      jump_scope: str = "clamped") -> ConvergenceReport:
    """Run the manufactured problem on the given (nx, n_t) levels to t = T.

    The exact displacement is clamped on the whole boundary, the flow is
    impermeable except on the drained top edge, and the initial
    displacement is the face-barycenter interpolant at t = 0.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("at least one refinement level is required")
    mass_mode = MassMode(mass_mode)
    lam, mu = lame_from_E_nu(E, nu)
    exact = trig_consolidation_solution(kappa)
    bc = convergence_bc()

    report = ConvergenceReport(metadata={
        "mass_mode": mass_mode.value, "gamma1": gamma1, "E": E, "nu": nu,
        "kappa": kappa, "final_time": final_time, "diagonal": diagonal.value,
        "jump_scope": jump_scope,
    })
    for nx, n_t in levels:
        mesh = build_structured_mesh(nx, nx, diagonal=diagonal)
        material = MaterialField.homogeneous(mesh.n_cells, lam, mu, kappa, gamma1)
        g_fn, f_fn = manufactured_sources(exact, material)
        tau = final_time / n_t
        system = build_system(mesh, material, bc, tau, mass_mode,
                              jump_scope=jump_scope)
        initial = State(cr_interpolate(mesh, exact, 0.0),
                        np.zeros(mesh.n_faces), np.zeros(mesh.n_cells), 0.0)
        final = run_transient(system, initial, g_fn, f_fn, n_t)[-1]
        err_u = energy_norm_error(final, exact, mesh, material, final_time,
                                  system.penalized_boundary)
        err_p = l2_pressure_error(final, exact, mesh, final_time)
        report.levels.append(LevelResult(nx, n_t, tau, err_u, err_p))
    report.compute_rates()
    return report


@dataclass
class OscillationMetrics:
    """Pressure extremes and area-weighted undershoot of one state."""

    min_pressure: float
    max_pressure: float
    undershoot: float


def oscillation_metric(state: State, mesh: Mesh) -> OscillationMetrics:
    """Deterministic scan for negative cell pressures."""
    p = state.p
    return OscillationMetrics(
        min_pressure=float(p.min()),
        max_pressure=float(p.max()),
        undershoot=float(np.sum(np.maximum(0.0, -p) * mesh.areas)),
    )


def checkerboard_kappa(mesh: Mesh, low: float = 1e-3, high: float = 1.0) -> np.ndarray:
    """Low conductivity in the south-west and north-east quadrants."""
    bx, by = mesh.cell_barycenters[:, 0], mesh.cell_barycenters[:, 1]
    in_low = ((bx < 0.5) & (by < 0.5)) | ((bx > 0.5) & (by > 0.5))
    return np.where(in_low, low, high)


def footing_case(nx: int, mass_mode: MassMode, kappa_spec="homogeneous", *,
                 tau: float = 1e-3, lam: float = 12500.0, mu: float = 8333.0,
                 gamma1: float = 0.5, diagonal: Diagonal = Diagonal.SW_NE,
                 jump_scope: str = "clamped"):
    """One step of the drained-footing experiment; returns (state, metrics)."""
    if nx < 8:
        raise ValueError("the footing boundary layer needs nx >= 8")
    mass_mode = MassMode(mass_mode)
    mesh = build_structured_mesh(nx, nx, diagonal=diagonal)
    if isinstance(kappa_spec, str):
        if kappa_spec == "homogeneous":
            kappa = np.full(mesh.n_cells, 1e-6)
        elif kappa_spec == "checkerboard":
            kappa = checkerboard_kappa(mesh)
        else:
            raise ValueError(f"unknown permeability spec {kappa_spec!r}")
    else:
        kappa = np.full(mesh.n_cells, float(kappa_spec))
    material = MaterialField(np.full(mesh.n_cells, lam), np.full(mesh.n_cells, mu),
                             kappa, gamma1)
    bc = footing_bc()
    system = build_system(mesh, material, bc, tau, mass_mode, jump_scope=jump_scope)
    initial = State(np.zeros(2 * mesh.n_faces), np.zeros(mesh.n_faces),
                    np.zeros(mesh.n_cells), 0.0)
    final = run_transient(system, initial, None, None, 1)[-1]
    return final, oscillation_metric(final, mesh)
