"""Nonconforming three-field finite elements for quasi-static consolidation.

Displacement, Darcy flux and pore pressure are discretized with
face-barycenter linears, lowest-order Raviart-Thomas elements (optionally
mass-lumped through circumcenter distances) and cellwise constants, coupled
by backward-Euler time stepping.
"""

from .assembly import MaterialField, TripletMatrix, lame_from_E_nu
from .bc import BoundarySpec, Clamped, Drained, Impermeable, SegmentBC, Traction
from .mesh import (
    Diagonal,
    Face,
    Mesh,
    Segment,
    build_structured_mesh,
    circumcenter,
    degenerate_faces,
    lumping_weight,
    mesh_from_cells,
)
from .spaces import DofMap, QuadratureRule, build_dof_map
from .system import (
    BiotSystem,
    MassMode,
    SolverError,
    State,
    build_system,
    eliminate_darcy,
    run_transient,
    solve_sparse,
    step,
)
from .verification import (
    ConvergenceReport,
    ExactSolution,
    OscillationMetrics,
    convergence_study,
    footing_case,
    manufactured_sources,
    oscillation_metric,
    trig_consolidation_solution,
)
from .vtkio import write_vtk

__version__ = "0.1.0"

__all__ = [
    "BiotSystem", "BoundarySpec", "Clamped", "ConvergenceReport", "Diagonal",
    "DofMap", "Drained", "ExactSolution", "Face", "Impermeable", "MassMode",
    "MaterialField", "Mesh", "OscillationMetrics", "QuadratureRule", "Segment",
    "SegmentBC", "SolverError", "State", "Traction", "TripletMatrix",
    "build_dof_map", "build_structured_mesh", "build_system", "circumcenter",
    "convergence_study", "degenerate_faces", "eliminate_darcy", "footing_case",
    "lame_from_E_nu", "lumping_weight", "manufactured_sources", "mesh_from_cells",
    "oscillation_metric", "run_transient", "solve_sparse", "step",
    "trig_consolidation_solution", "write_vtk",
]
