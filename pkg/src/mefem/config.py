"""Flat ``key = value`` run configuration.

Lines are ``dotted.key = value``; ``#`` starts a comment; array values are
whitespace-separated numbers.  Recognised keys::

    mesh.n                    cells per axis of the generated unit cube
    mesh.file                 path to a meshfmt file (instead of mesh.n)
    mesh.elastic_dirichlet    cube faces, e.g. "x0" or "x0 y0" or "all"
    mesh.magnetic_dirichlet
    fem.degree                1 or 2
    material.stiffness        36 numbers, row-major (Pa)
    material.coupling         18 numbers, row-major (T)
    material.permeability     9 numbers, row-major (H/m)
    bc.traction[.<face>]      3 numbers, constant traction on elastic-Neumann facets
    bc.flux[.<face>]          1 number, constant normal flux on magnetic-Neumann facets
    solver.type               direct | schur | minres
    solver.tol, solver.max_iterations
    penalty.t                 scale of the magnetic block (default 1)
    output.dir
    infsup.levels, infsup.spread_tol
    convergence.case, convergence.levels
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mefem.errors import ConfigError
from mefem.material import MaterialLaw
from mefem.mesh import CUBE_FACES
from mefem.solver import METHODS

KNOWN_PREFIXES = ("mesh.", "fem.", "material.", "bc.", "solver.", "penalty.", "output.",
                  "infsup.", "convergence.")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not key.startswith(KNOWN_PREFIXES):
            raise ConfigError(f"{source}:{number}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _numbers(entries, key, count=None, default=None):
    if key not in entries:
        if default is not None:
            return default
        raise ConfigError(f"missing required key {key!r}")
    try:
        vals = np.array([float(t) for t in entries[key].split()])
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {entries[key]!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"{key}: expected {count} numbers, got {len(vals)}")
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"{key}: non-finite value")
    return vals


def _integer(entries, key, default):
    if key not in entries:
        return default
    try:
        return int(entries[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {entries[key]!r}") from None


def _levels(entries, key, default):
    if key not in entries:
        return list(default)
    try:
        levels = [int(t) for t in entries[key].split()]
    except ValueError:
        raise ConfigError(f"{key}: expected integers") from None
    if not levels or any(n < 1 for n in levels):
        raise ConfigError(f"{key}: levels must be positive integers")
    return levels


@dataclass
class RunConfig:
    mesh_n: int | None = 2
    mesh_file: Path | None = None
    elastic_dirichlet: str = "x0"
    magnetic_dirichlet: str = "x0"
    degree: int = 1
    material: MaterialLaw | None = None
    traction: dict[str | None, np.ndarray] = field(default_factory=dict)
    flux: dict[str | None, float] = field(default_factory=dict)
    solver: str = "direct"
    tol: float = 1e-10
    max_iterations: int = 1000
    t: float = 1.0
    output_dir: Path = Path("out")
    infsup_levels: list[int] = field(default_factory=lambda: [1, 2, 3])
    spread_tol: float = 0.20
    case: str = "trigonometric"
    convergence_levels: list[int] | None = None

    def require_material(self) -> MaterialLaw:
        if self.material is None:
            raise ConfigError("material.stiffness, material.coupling and material.permeability are required")
        return self.material


def _faces(entries, key, default):
    value = entries.get(key, default).strip()
    names = CUBE_FACES if value == "all" else value.replace(",", " ").split()
    bad = [n for n in names if n not in CUBE_FACES]
    if bad or not names:
        raise ConfigError(f"{key}: expected a non-empty subset of {CUBE_FACES} or 'all', got {value!r}")
    return " ".join(names)


def build_config(entries: dict[str, str], base_dir: Path | None = None) -> RunConfig:
    cfg = RunConfig()
    if "mesh.file" in entries:
        path = Path(entries["mesh.file"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"mesh.file: {path} does not exist")
        cfg.mesh_file, cfg.mesh_n = path, None
    cfg.mesh_n = _integer(entries, "mesh.n", cfg.mesh_n)
    if cfg.mesh_file is None and (cfg.mesh_n is None or cfg.mesh_n < 1):
        raise ConfigError("mesh.n must be a positive integer")
    cfg.elastic_dirichlet = _faces(entries, "mesh.elastic_dirichlet", "x0")
    cfg.magnetic_dirichlet = _faces(entries, "mesh.magnetic_dirichlet", "x0")
    cfg.degree = _integer(entries, "fem.degree", 1)
    if cfg.degree not in (1, 2):
        raise ConfigError(f"fem.degree must be 1 or 2, got {cfg.degree}")

    material_keys = ("material.stiffness", "material.coupling", "material.permeability")
    present = [k in entries for k in material_keys]
    if any(present):
        if not all(present):
            missing = [k for k, p in zip(material_keys, present) if not p]
            raise ConfigError(f"incomplete material block, missing {missing}")
        cfg.material = MaterialLaw(
            _numbers(entries, "material.stiffness", 36).reshape(6, 6),
            _numbers(entries, "material.coupling", 18).reshape(6, 3),
            _numbers(entries, "material.permeability", 9).reshape(3, 3),
        )

    for key in entries:
        if key == "bc.traction" or key.startswith("bc.traction."):
            face = key.removeprefix("bc.traction").lstrip(".") or None
            if face is not None and face not in CUBE_FACES:
                raise ConfigError(f"{key}: unknown face {face!r}")
            cfg.traction[face] = _numbers(entries, key, 3)
        elif key == "bc.flux" or key.startswith("bc.flux."):
            face = key.removeprefix("bc.flux").lstrip(".") or None
            if face is not None and face not in CUBE_FACES:
                raise ConfigError(f"{key}: unknown face {face!r}")
            cfg.flux[face] = float(_numbers(entries, key, 1)[0])
        elif key.startswith("bc."):
            raise ConfigError(f"unknown key {key!r}")

    cfg.solver = entries.get("solver.type", "direct")
    if cfg.solver not in METHODS:
        raise ConfigError(f"solver.type must be one of {METHODS}, got {cfg.solver!r}")
    cfg.tol = float(_numbers(entries, "solver.tol", 1, np.array([1e-10]))[0])
    if not cfg.tol > 0:
        raise ConfigError("solver.tol must be positive")
    cfg.max_iterations = _integer(entries, "solver.max_iterations", 1000)
    cfg.t = float(_numbers(entries, "penalty.t", 1, np.array([1.0]))[0])
    if "output.dir" in entries:
        cfg.output_dir = Path(entries["output.dir"])
    cfg.infsup_levels = _levels(entries, "infsup.levels", [1, 2, 3])
    cfg.spread_tol = float(_numbers(entries, "infsup.spread_tol", 1, np.array([0.20]))[0])
    cfg.case = entries.get("convergence.case", "trigonometric")
    if "convergence.levels" in entries:
        cfg.convergence_levels = _levels(entries, "convergence.levels", [])
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_config_text(text, str(path)), path.parent)
