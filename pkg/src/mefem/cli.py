"""Command-line front end: ``mefem {check-material,solve,infsup,convergence}``.

Exit codes: 0 success, 1 numerical or criterion failure, 2 usage or parse
error.  Every output file is written with ``repr`` floats in a fixed order, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _limit_threads() -> None:
    # Only effective before numpy is first imported.
    threads = os.environ.get("MEFEM_THREADS", "1")
    for var in THREAD_VARS:
        os.environ[var] = threads


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--mesh-n", type=int, help="cells per axis of the generated unit cube")
    common.add_argument("--degree", type=int, choices=(1, 2), help="polynomial degree")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="mefem", description="Linear magneto-elastostatics FEM harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check-material", parents=[common], help="check material admissibility")
    solve = sub.add_parser("solve", parents=[common], help="solve the coupled problem")
    solve.add_argument("--vtk", action="store_true", help="also write solution.vtk")
    infsup = sub.add_parser("infsup", parents=[common], help="discrete stability constants per level")
    infsup.add_argument("--levels", type=int, nargs="+", help="cells per axis of each level")
    conv = sub.add_parser("convergence", parents=[common], help="manufactured-solution convergence study")
    conv.add_argument("--levels", type=int, nargs="+", help="cells per axis of each level")
    conv.add_argument("--case", help="manufactured case id")
    return parser


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return " ".join(_fmt(v) for v in value)
    return str(value)


def _write_report(path: Path, items: list[tuple[str, object]]) -> None:
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items))


def _load(args):
    from mefem.config import RunConfig, load_config

    cfg = load_config(args.config) if args.config is not None else RunConfig()
    if args.mesh_n is not None:
        if args.mesh_n < 1:
            from mefem.errors import ConfigError
            raise ConfigError("--mesh-n must be a positive integer")
        cfg.mesh_n, cfg.mesh_file = args.mesh_n, None
    if args.degree is not None:
        cfg.degree = args.degree
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _material(cfg):
    from mefem.material import MaterialLaw

    return cfg.material if cfg.material is not None else MaterialLaw.unit()


def _mesh(cfg):
    from mefem.mesh import generate_unit_cube_mesh, read_mesh

    if cfg.mesh_file is not None:
        return read_mesh(cfg.mesh_file.read_text())
    return generate_unit_cube_mesh(cfg.mesh_n, cfg.elastic_dirichlet, cfg.magnetic_dirichlet)


def _neumann(cfg, mesh):
    """Per-facet constant data; face-specific keys win over the catch-all key."""
    import numpy as np

    from mefem.assembly import NeumannData
    from mefem.mesh import face_of_facets

    faces = face_of_facets(mesh.nodes, mesh.facets)
    nf = len(faces)

    def per_facet(table, width):
        values = np.zeros((nf, width))
        mask = np.zeros(nf, dtype=bool)
        for i, face in enumerate(faces):
            key = face if face in table else None
            if key in table:
                values[i] = table[key]
                mask[i] = True
        return values, mask

    if not cfg.traction and not cfg.flux:
        return None
    tau, tau_mask = per_facet(cfg.traction, 3)
    flx, flx_mask = per_facet(cfg.flux, 1)
    return NeumannData(traction=tau, flux=flx[:, 0], traction_mask=tau_mask, flux_mask=flx_mask)


def cmd_check_material(cfg) -> int:
    from mefem.material import (b_coercivity_constant, b_continuity_constant,
                                check_minimal_positivity, validate_material)
    from mefem.errors import ConfigError, UnsupportedMaterialError

    if cfg.material is None:
        raise ConfigError("check-material needs material.stiffness, material.coupling and material.permeability")
    law = cfg.material
    report = validate_material(law)
    items: list[tuple[str, object]] = []
    try:
        mp = check_minimal_positivity(law.coupling)
        items += [("a_hat", mp.a_hat), ("M", mp.M), ("minimal_positivity", mp.satisfied)]
    except ValueError as exc:
        items.append(("minimal_positivity", f"error: {exc}"))
    try:
        items.append(("b_continuity", b_continuity_constant(law.permeability)))
        items.append(("b_coercivity_unit_cube", b_coercivity_constant(law.permeability, 1.0)))
    except (UnsupportedMaterialError, ValueError):
        items.append(("b_constants", "non-diagonal permeability"))
    for check in report.checks:
        key = "check." + check.name.replace(" ", "_")
        items.append((key, "pass" if check.passed else "fail" + (f" ({check.detail})" if check.detail else "")))
    items.append(("status", "pass" if report.passed else "fail"))
    _write_report(cfg.output_dir / "material_report.txt", items)
    for check in report.failures():
        print(f"{check.name}: {check.detail or 'failed'}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_solve(cfg, vtk: bool = False) -> int:
    from mefem.assembly import assemble_system, build_spaces
    from mefem.errors import NoConvergenceError, SingularSystemError
    from mefem.fieldio import format_field, format_vtk
    from mefem.solver import solve
    from mefem.verification import compute_energies

    law = _material(cfg)
    mesh = _mesh(cfg)
    spaces = build_spaces(mesh, cfg.degree)
    neumann = _neumann(cfg, mesh)
    system = assemble_system(spaces, law, neumann=neumann, t=cfg.t)
    out = cfg.output_dir
    base = [("method", cfg.solver), ("degree", cfg.degree), ("num_free_u", system.n_u),
            ("num_free_psi", system.n_psi)]
    try:
        sol = solve(system, cfg.solver, tol=cfg.tol, max_iterations=cfg.max_iterations)
    except NoConvergenceError as exc:
        _write_report(out / "residuals.txt", base + [
            ("status", "no convergence"), ("iterations", exc.iterations), ("residual", float(exc.residual))])
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except SingularSystemError as exc:
        _write_report(out / "residuals.txt", base + [("status", "singular system")])
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_FAIL

    u = spaces.expand_vector(sol.u)[: mesh.num_nodes]
    psi = spaces.expand_scalar(sol.psi)[: mesh.num_nodes]
    (out / "displacement.field").write_text(format_field("displacement", u))
    (out / "potential.field").write_text(format_field("potential", psi))
    if vtk:
        (out / "solution.vtk").write_text(format_vtk(mesh, {"displacement": u, "potential": psi}))
    w_mag, w_el = compute_energies(sol, spaces, law, neumann)
    _write_report(out / "residuals.txt", base + [
        ("status", "converged"), ("iterations", sol.iterations),
        ("residual_u", float(sol.residual_u)), ("residual_psi", float(sol.residual_psi)),
        ("relative_residual", sol.relative_residual(system)),
        ("W_mag", float(w_mag)), ("W_el", float(w_el)),
    ])
    return EXIT_OK


INFSUP_COLUMNS = ("h", "beta_h", "alpha_h", "gamma_h", "beta_theory", "C_prime", "M", "s")


def cmd_infsup(cfg, levels=None) -> int:
    import math

    import numpy as np

    from mefem.analysis import infsup_refinement_study
    from mefem.errors import SizeLimitError
    from mefem.material import check_minimal_positivity

    law = _material(cfg)
    out = cfg.output_dir
    if not np.any(law.coupling):
        print("coupling absent, inf-sup trivially zero", file=sys.stderr)
        _write_report(out / "infsup_report.txt", [("status", "fail"), ("reason", "coupling absent")])
        return EXIT_FAIL
    mp = check_minimal_positivity(law.coupling)
    if not mp.satisfied:
        print(f"minimal positivity violated, M = {mp.M:.17g}", file=sys.stderr)
        _write_report(out / "infsup_report.txt", [("status", "fail"), ("reason", "minimal positivity"),
                                                 ("M", mp.M)])
        return EXIT_FAIL
    levels = list(levels) if levels else list(cfg.infsup_levels)
    try:
        study = infsup_refinement_study(levels, cfg.degree, law, cfg.elastic_dirichlet,
                                        cfg.magnetic_dirichlet, cfg.spread_tol)
    except SizeLimitError as exc:
        print(f"{exc}; use coarser levels", file=sys.stderr)
        return EXIT_FAIL
    lines = [",".join(INFSUP_COLUMNS)]
    for row in study.rows:
        d = row.as_dict()
        vals = [math.nan if d[c] is None else float(d[c]) for c in INFSUP_COLUMNS]
        lines.append(",".join(repr(v) for v in vals))
    (out / "infsup.csv").write_text("\n".join(lines) + "\n")
    _write_report(out / "infsup_report.txt", [
        ("levels", levels), ("degree", cfg.degree), ("beta_h", [float(b) for b in study.beta_values]),
        ("spread", float(study.spread)), ("spread_tol", float(study.spread_tol)),
        ("status", "pass" if study.passed else "fail"),
    ])
    if not study.passed:
        print(f"inf-sup study failed: min beta_h = {min(study.beta_values):.6g}, "
              f"spread = {study.spread:.6g} (tolerance {study.spread_tol:.6g})", file=sys.stderr)
    return EXIT_OK if study.passed else EXIT_FAIL


DEFAULT_CONVERGENCE_LEVELS = {1: [2, 4, 8], 2: [2, 4]}


def cmd_convergence(cfg, case_id=None, levels=None) -> int:
    from mefem.errors import ConfigError
    from mefem.verification import CASES, make_manufactured_case, run_convergence_study

    case_id = case_id or cfg.case
    if case_id not in CASES:
        raise ConfigError(f"unknown manufactured case {case_id!r}; choose from {', '.join(CASES)}")
    levels = list(levels or cfg.convergence_levels or DEFAULT_CONVERGENCE_LEVELS[cfg.degree])
    if levels != sorted(set(levels)) or levels[0] < 1:
        raise ConfigError("convergence levels must be strictly ascending positive integers")
    case = make_manufactured_case(case_id, _material(cfg))
    table = run_convergence_study(case, cfg.degree, levels, cfg.solver, cfg.tol)
    out = cfg.output_dir
    (out / "convergence.csv").write_text(table.to_csv())
    passed = table.meets_thresholds()
    _write_report(out / "convergence_report.txt", [
        ("case", case_id), ("degree", cfg.degree), ("levels", levels),
        ("min_rates", [float(r) for r in table.min_rates()]),
        ("exact_reproduction", table.exact_reproduction),
        ("status", "pass" if passed else "fail"),
    ])
    if table.exact_reproduction:
        print("exact reproduction")
    if not passed:
        print("observed rates below thresholds: min (L2 u, H1 u, L2 psi, H1 psi) = "
              + ", ".join(f"{r:.4g}" for r in table.min_rates()), file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> int:
    _limit_threads()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    import logging

    from mefem.errors import (ConfigError, MeshParseError, MeshValidationError, MefemError)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "check-material":
            return cmd_check_material(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, vtk=args.vtk)
        if args.command == "infsup":
            return cmd_infsup(cfg, args.levels)
        return cmd_convergence(cfg, args.case, args.levels)
    except (ConfigError, MeshParseError, MeshValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MefemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
