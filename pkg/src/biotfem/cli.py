"""Command-line entry point for the convergence and footing experiments.

Defaults reproduce the reference experiments: ``biot-fem converge`` runs the
five-level manufactured study in both mass modes, ``biot-fem footing`` runs
the one-step loaded-footing problem and reports oscillation metrics, and
``biot-fem run`` performs a single general transient run.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .mesh import Diagonal, build_structured_mesh
from .system import MassMode, SolverError
from .verification import (
    ConvergenceReport,
    convergence_study,
    cr_interpolate,
    footing_case,
    manufactured_sources,
    oscillation_metric,
    trig_consolidation_solution,
)
from .vtkio import displacement_at_vertices, write_vtk


def _parse_levels(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        nx = int(item)
        if nx < 1:
            raise ValueError(f"level {nx} must be a positive grid size")
        out.append((nx, nx))
    return out


def _read_config_file(path: str, known: set[str]) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def _apply_config_defaults(parser, argv):
    """Let an optional key=value config file supply defaults; flags win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known_ns, _ = probe.parse_known_args(argv)
    if known_ns.config:
        known = {a.dest for a in parser._actions if a.dest != "help"}
        overrides = _read_config_file(known_ns.config, known)
        parser.set_defaults(**overrides)
    return parser.parse_args(argv)


def _write_effective_config(path: Path, args: argparse.Namespace, keys) -> None:
    with open(path, "w") as fh:
        for key in keys:
            fh.write(f"{key}={getattr(args, key)}\n")


def _modes(mass_mode: str) -> list[MassMode]:
    if mass_mode == "both":
        return [MassMode.LUMPED, MassMode.CONSISTENT]
    return [MassMode(mass_mode)]


def _export_level_vtk(outdir: Path, report_tag: str, nx: int, mode: MassMode,
                      mesh, state) -> None:
    write_vtk(outdir / f"{report_tag}_nx{nx}_{mode.value}.vtk", mesh,
              cell_data={"pressure": state.p},
              point_data={"displacement": displacement_at_vertices(mesh, state.u)})


def cmd_converge(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    levels = _parse_levels(args.levels)
    formats = set(args.formats.split(","))
    diagonal = Diagonal(args.diagonal)

    for mode in _modes(args.mass_mode):
        report = convergence_study(
            levels, mode, E=args.young, nu=args.poisson, kappa=args.kappa,
            gamma1=args.gamma1, final_time=args.final_time, diagonal=diagonal)
        print(f"== convergence study ({mode.value} mass) ==")
        print(report.format_table())
        if "csv" in formats:
            report.to_csv(outdir / f"converge_{mode.value}.csv")
        if "vtk" in formats:
            _export_converge_fields(args, outdir, mode, levels, diagonal)
    _write_effective_config(outdir / "converge_config.txt", args, (
        "levels", "mass_mode", "young", "poisson", "kappa", "gamma1",
        "final_time", "diagonal", "formats"))
    return 0


def _export_converge_fields(args, outdir: Path, mode: MassMode, levels, diagonal) -> None:
    # rerun per level to recover the final state for visualization
    from .assembly import MaterialField, lame_from_E_nu
    from .system import State, build_system, run_transient
    from .verification import convergence_bc

    lam, mu = lame_from_E_nu(args.young, args.poisson)
    exact = trig_consolidation_solution(args.kappa)
    bc = convergence_bc()
    for nx, n_t in levels:
        mesh = build_structured_mesh(nx, nx, diagonal=diagonal)
        material = MaterialField.homogeneous(mesh.n_cells, lam, mu, args.kappa, args.gamma1)
        g_fn, f_fn = manufactured_sources(exact, material)
        system = build_system(mesh, material, bc, args.final_time / n_t, mode)
        initial = State(cr_interpolate(mesh, exact, 0.0), np.zeros(mesh.n_faces),
                        np.zeros(mesh.n_cells), 0.0)
        final = run_transient(system, initial, g_fn, f_fn, n_t)[-1]
        _export_level_vtk(outdir, "converge", nx, mode, mesh, final)


def cmd_footing(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = []
    for mode in _modes(args.mass_mode):
        state, metrics = footing_case(
            args.nx, mode, args.kappa, tau=args.tau, lam=args.lam, mu=args.mu,
            gamma1=args.gamma1, diagonal=Diagonal(args.diagonal))
        mesh = build_structured_mesh(args.nx, args.nx, diagonal=Diagonal(args.diagonal))
        write_vtk(outdir / f"footing_{mode.value}_{args.kappa}.vtk", mesh,
                  cell_data={"pressure": state.p},
                  point_data={"displacement": displacement_at_vertices(mesh, state.u)})
        line = (f"footing {mode.value} kappa={args.kappa}: "
                f"min_p={metrics.min_pressure:.6e} max_p={metrics.max_pressure:.6e} "
                f"undershoot={metrics.undershoot:.6e}")
        print(line)
        lines.append(line)
    (outdir / "footing_metrics.txt").write_text("\n".join(lines) + "\n")
    _write_effective_config(outdir / "footing_config.txt", args, (
        "nx", "mass_mode", "kappa", "tau", "lam", "mu", "gamma1", "diagonal"))
    return 0


def cmd_run(args) -> int:
    from .assembly import MaterialField, lame_from_E_nu
    from .system import State, build_system, run_transient
    from .verification import convergence_bc, footing_bc

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = build_structured_mesh(args.nx, args.ny, diagonal=Diagonal(args.diagonal))
    mode = MassMode(args.mass_mode)

    if args.problem == "manufactured":
        lam, mu = lame_from_E_nu(args.young, args.poisson)
        material = MaterialField.homogeneous(mesh.n_cells, lam, mu, args.kappa, args.gamma1)
        exact = trig_consolidation_solution(args.kappa)
        g_fn, f_fn = manufactured_sources(exact, material)
        bc = convergence_bc()
        initial_u = cr_interpolate(mesh, exact, 0.0)
    else:
        material = MaterialField.homogeneous(mesh.n_cells, args.lam, args.mu,
                                             args.kappa_value, args.gamma1)
        g_fn = f_fn = None
        bc = footing_bc()
        initial_u = np.zeros(2 * mesh.n_faces)

    system = build_system(mesh, material, bc, args.tau, mode)
    initial = State(initial_u, np.zeros(mesh.n_faces), np.zeros(mesh.n_cells), 0.0)
    final = run_transient(system, initial, g_fn, f_fn, args.nt)[-1]

    final.write_csv(outdir / "state.csv")
    write_vtk(outdir / "state.vtk", mesh,
              cell_data={"pressure": final.p},
              point_data={"displacement": displacement_at_vertices(mesh, final.u)})
    metrics = oscillation_metric(final, mesh)
    print(f"run {args.problem}: t={final.t:g} min_p={metrics.min_pressure:.6e} "
          f"max_p={metrics.max_pressure:.6e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biot-fem",
                                     description="Three-field consolidation solver")
    sub = parser.add_subparsers(dest="command", required=True)

    common = dict(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    pc = sub.add_parser("converge", help="manufactured-solution refinement study", **common)
    pc.add_argument("--config", help="key=value config file; flags win")
    pc.add_argument("--levels", default="4,8,16,32,64",
                    help="comma-separated grid sizes; n_t equals nx per level")
    pc.add_argument("--mass-mode", default="both", choices=["lumped", "consistent", "both"])
    pc.add_argument("--young", type=float, default=1.0)
    pc.add_argument("--poisson", type=float, default=0.2)
    pc.add_argument("--kappa", type=float, default=1.0)
    pc.add_argument("--gamma1", type=float, default=0.5)
    pc.add_argument("--final-time", type=float, default=1.0)
    pc.add_argument("--diagonal", default="sw-ne", choices=[d.value for d in Diagonal])
    pc.add_argument("--outdir", default="out_converge")
    pc.add_argument("--formats", default="csv,vtk")
    pc.set_defaults(func=cmd_converge)

    pf = sub.add_parser("footing", help="one-step loaded footing experiment", **common)
    pf.add_argument("--config", help="key=value config file; flags win")
    pf.add_argument("--nx", type=int, default=32)
    pf.add_argument("--mass-mode", default="both", choices=["lumped", "consistent", "both"])
    pf.add_argument("--kappa", default="homogeneous", choices=["homogeneous", "checkerboard"])
    pf.add_argument("--tau", type=float, default=1e-3)
    pf.add_argument("--lam", type=float, default=12500.0)
    pf.add_argument("--mu", type=float, default=8333.0)
    pf.add_argument("--gamma1", type=float, default=0.5)
    pf.add_argument("--diagonal", default="sw-ne", choices=[d.value for d in Diagonal])
    pf.add_argument("--outdir", default="out_footing")
    pf.set_defaults(func=cmd_footing)

    pr = sub.add_parser("run", help="general single transient run", **common)
    pr.add_argument("--config", help="key=value config file; flags win")
    pr.add_argument("--problem", default="manufactured", choices=["manufactured", "footing"])
    pr.add_argument("--nx", type=int, default=16)
    pr.add_argument("--ny", type=int, default=16)
    pr.add_argument("--nt", type=int, default=16)
    pr.add_argument("--tau", type=float, default=1 / 16)
    pr.add_argument("--mass-mode", default="lumped", choices=["lumped", "consistent"])
    pr.add_argument("--young", type=float, default=1.0)
    pr.add_argument("--poisson", type=float, default=0.2)
    pr.add_argument("--kappa", type=float, default=1.0)
    pr.add_argument("--lam", type=float, default=12500.0)
    pr.add_argument("--mu", type=float, default=8333.0)
    pr.add_argument("--kappa-value", type=float, default=1e-6)
    pr.add_argument("--gamma1", type=float, default=0.5)
    pr.add_argument("--diagonal", default="sw-ne", choices=[d.value for d in Diagonal])
    pr.add_argument("--outdir", default="out_run")
    pr.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_defaults(parser, argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
