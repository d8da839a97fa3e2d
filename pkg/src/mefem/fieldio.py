"""ASCII nodal field files (``fieldfmt 1``) and a minimal legacy-VTK export."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from mefem.mesh import Mesh


def format_field(name: str, values: NDArray) -> str:
    """One ``fieldfmt 1`` section; shape (N,) is scalar, (N, 3) vector."""
    values = np.asarray(values, dtype=np.float64)
    kind = "scalar" if values.ndim == 1 else "vector"
    if kind == "vector" and values.shape[1] != 3:
        raise ValueError("vector fields need 3 components")
    lines = ["fieldfmt 1", f"{kind} {name} {len(values)}"]
    if kind == "scalar":
        lines += [repr(float(v)) for v in values]
    else:
        lines += [" ".join(repr(float(c)) for c in row) for row in values]
    return "\n".join(lines) + "\n"


def parse_field(text: str) -> tuple[str, NDArray[np.float64]]:
    """Inverse of :func:`format_field`; returns ``(name, values)``."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "fieldfmt 1":
        raise ValueError("missing 'fieldfmt 1' header")
    head = lines[1].split()
    if len(head) != 3 or head[0] not in ("scalar", "vector"):
        raise ValueError(f"bad field header {lines[1]!r}")
    kind, name, count = head[0], head[1], int(head[2])
    rows = [[float(t) for t in ln.split()] for ln in lines[2:2 + count]]
    if len(rows) != count:
        raise ValueError(f"expected {count} values, got {len(rows)}")
    values = np.array(rows, dtype=np.float64)
    return name, values[:, 0] if kind == "scalar" else values


def format_vtk(mesh: Mesh, point_data: dict[str, NDArray], title: str = "mefem") -> str:
    """Legacy ASCII VTK unstructured grid with linear tets and vertex data."""
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.num_nodes} double"]
    out += [" ".join(repr(float(c)) for c in p) for p in mesh.nodes]
    out.append(f"CELLS {mesh.num_tets} {5 * mesh.num_tets}")
    out += ["4 " + " ".join(str(int(i)) for i in t) for t in mesh.tets]
    out.append(f"CELL_TYPES {mesh.num_tets}")
    out += ["10"] * mesh.num_tets
    out.append(f"POINT_DATA {mesh.num_nodes}")
    for name, vals in point_data.items():
        vals = np.asarray(vals)[: mesh.num_nodes]
        if vals.ndim == 1:
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(float(v)) for v in vals]
        else:
            out.append(f"VECTORS {name} double")
            out += [" ".join(repr(float(c)) for c in row) for row in vals]
    return "\n".join(out) + "\n"
