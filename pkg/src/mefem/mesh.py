"""Tetrahedral meshes with independent elastic and magnetic boundary classes.

A :class:`Mesh` stores node coordinates, positively oriented tetrahedra and one
record per boundary facet.  Every facet carries two boundary classes, one for
the displacement field and one for the magnetic potential, so the Dirichlet
portions of the two fields can be chosen independently.

Example::

    from mefem.mesh import generate_unit_cube_mesh

    mesh = generate_unit_cube_mesh(2, elastic_dirichlet={"x0"}, magnetic_dirichlet={"x0"})
    mesh.nodes.shape   # (27, 3)
"""

from __future__ import annotations

import io
import itertools
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass
from enum import IntEnum
from typing import TextIO

import numpy as np
from numpy.typing import NDArray

from mefem.errors import MeshParseError, MeshValidationError
from mefem.validation import Check, ValidationReport

CUBE_FACES = ("x0", "x1", "y0", "y1", "z0", "z1")

# Faces of a positively oriented tet, listed so that the normal
# (b - a) x (c - a) points outward.
TET_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


class BoundaryClass(IntEnum):
    DIRICHLET = 0
    NEUMANN = 1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh.

    Attributes:
        nodes: (N, 3) float coordinates in meters.
        tets: (T, 4) node indices.
        facets: (F, 3) node indices of boundary triangles, outward oriented.
        elastic_class: (F,) :class:`BoundaryClass` values for the displacement.
        magnetic_class: (F,) :class:`BoundaryClass` values for the potential.
    """

    nodes: NDArray[np.float64]
    tets: NDArray[np.int64]
    facets: NDArray[np.int64]
    elastic_class: NDArray[np.int8]
    magnetic_class: NDArray[np.int8]

    def __post_init__(self):
        arrays = {
            "nodes": np.array(self.nodes, dtype=np.float64).reshape(-1, 3),
            "tets": np.array(self.tets, dtype=np.int64).reshape(-1, 4),
            "facets": np.array(self.facets, dtype=np.int64).reshape(-1, 3),
            "elastic_class": np.array(self.elastic_class, dtype=np.int8).reshape(-1),
            "magnetic_class": np.array(self.magnetic_class, dtype=np.int8).reshape(-1),
        }
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        nf = len(self.facets)
        if len(self.elastic_class) != nf or len(self.magnetic_class) != nf:
            raise ValueError("one elastic and one magnetic class is required per facet")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_tets(self) -> int:
        return len(self.tets)

    def tet_volumes(self) -> NDArray[np.float64]:
        """Signed volumes; positive for correctly oriented tets."""
        p = self.nodes[self.tets]
        d = p[:, 1:, :] - p[:, :1, :]
        return np.linalg.det(d) / 6.0

    def with_nodes(self, nodes) -> Mesh:
        return Mesh(nodes, self.tets, self.facets, self.elastic_class, self.magnetic_class)

    def with_classes(self, elastic_class=None, magnetic_class=None) -> Mesh:
        return Mesh(
            self.nodes,
            self.tets,
            self.facets,
            self.elastic_class if elastic_class is None else elastic_class,
            self.magnetic_class if magnetic_class is None else magnetic_class,
        )

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("nodes", "tets", "facets", "elastic_class", "magnetic_class")
        )

    __hash__ = None


def boundary_faces(tets: NDArray[np.int64]) -> NDArray[np.int64]:
    """Outward oriented triangles that belong to exactly one tet, in tet order."""
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    faces = tets[:, TET_FACES].reshape(-1, 3)
    keys = Counter(map(tuple, np.sort(faces, axis=1).tolist()))
    once = np.array([keys[tuple(sorted(f))] == 1 for f in faces.tolist()], dtype=bool)
    return faces[once]


def _parse_selector(selector, what: str) -> frozenset[str]:
    if isinstance(selector, str):
        selector = CUBE_FACES if selector == "all" else selector.replace(",", " ").split()
    names = frozenset(selector)
    if not names:
        raise ValueError(f"{what} face selector is empty; a Dirichlet portion is required")
    unknown = names - set(CUBE_FACES)
    if unknown:
        raise ValueError(f"unknown cube face(s) {sorted(unknown)}; expected a subset of {CUBE_FACES}")
    return names


def face_of_facets(nodes: NDArray[np.float64], facets: NDArray[np.int64], tol: float = 1e-12) -> list[str | None]:
    """Name of the bounding-box face each facet lies on, or None.

    Faces are those of the axis-aligned bounding box of ``nodes``; a facet lies
    on a face when all three of its vertices do.
    """
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    scale = max(float(np.max(hi - lo)), 1.0)
    names = []
    for f in facets:
        p = nodes[f]
        found = None
        for axis, letter in enumerate("xyz"):
            if np.all(np.abs(p[:, axis] - lo[axis]) <= tol * scale):
                found = f"{letter}0"
                break
            if np.all(np.abs(p[:, axis] - hi[axis]) <= tol * scale):
                found = f"{letter}1"
                break
        names.append(found)
    return names


def generate_unit_cube_mesh(n: int, elastic_dirichlet="x0", magnetic_dirichlet="x0") -> Mesh:
    """Structured mesh of [0, 1]^3 with n^3 cells, each split into 6 Kuhn tets.

    Args:
        n: Cells per axis, at least 1.
        elastic_dirichlet: Cube faces (subset of ``CUBE_FACES``, or ``"all"``)
            where the displacement is clamped.
        magnetic_dirichlet: Cube faces where the potential vanishes.

    Returns:
        Mesh with (n+1)^3 nodes and 6 n^3 tets; facets on selected faces are
        DIRICHLET for the matching field, all others NEUMANN.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    el_faces = _parse_selector(elastic_dirichlet, "elastic")
    mag_faces = _parse_selector(magnetic_dirichlet, "magnetic")

    m = n + 1
    grid = np.arange(m) / n
    z, y, x = np.meshgrid(grid, grid, grid, indexing="ij")
    nodes = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def idx(i, j, k):
        return i + m * (j + m * k)

    unit = np.eye(3, dtype=np.int64)
    tets = []
    for k, j, i in itertools.product(range(n), repeat=3):
        for perm in itertools.permutations(range(3)):
            corner = np.array([i, j, k])
            verts = [corner.copy()]
            for axis in perm:
                corner = corner + unit[axis]
                verts.append(corner.copy())
            tet = [idx(*v) for v in verts]
            # Odd permutations give negative orientation.
            if np.linalg.det(np.array(verts[1:]) - verts[0]) < 0:
                tet[2], tet[3] = tet[3], tet[2]
            tets.append(tet)
    tets = np.array(tets, dtype=np.int64)

    facets = boundary_faces(tets)
    faces = face_of_facets(nodes, facets)
    elastic = np.where([f in el_faces for f in faces], BoundaryClass.DIRICHLET, BoundaryClass.NEUMANN)
    magnetic = np.where([f in mag_faces for f in faces], BoundaryClass.DIRICHLET, BoundaryClass.NEUMANN)
    return Mesh(nodes, tets, facets, elastic, magnetic)


def validate_mesh(mesh: Mesh) -> ValidationReport:
    """Check every mesh invariant and report offending entities."""
    checks = []
    nn = mesh.num_nodes

    bad_tet = np.flatnonzero(np.any((mesh.tets < 0) | (mesh.tets >= nn), axis=1))
    bad_facet = np.flatnonzero(np.any((mesh.facets < 0) | (mesh.facets >= nn), axis=1))
    in_range = len(bad_tet) == 0 and len(bad_facet) == 0
    detail = ""
    if len(bad_tet):
        detail = f"tet {bad_tet[0]} has a node index outside [0, {nn})"
    elif len(bad_facet):
        detail = f"facet {bad_facet[0]} has a node index outside [0, {nn})"
    checks.append(Check("index range", in_range, detail, tuple(bad_tet.tolist())))

    if not in_range:
        # Geometry and topology checks are meaningless with dangling indices.
        for name in ("positive volume", "boundary facets", "non-empty elastic Dirichlet",
                     "non-empty magnetic Dirichlet"):
            checks.append(Check(name, False, "skipped: index range check failed"))
        return ValidationReport(tuple(checks))

    vol = mesh.tet_volumes()
    bad = np.flatnonzero(~(vol > 0))
    checks.append(Check(
        "positive volume",
        len(bad) == 0,
        f"tet {bad[0]} has signed volume {vol[bad[0]]:.3e}" if len(bad) else "",
        tuple(bad.tolist()),
    ))

    expected = Counter(map(tuple, np.sort(boundary_faces(mesh.tets), axis=1).tolist()))
    given = Counter(map(tuple, np.sort(mesh.facets, axis=1).tolist()))
    offenders = []
    detail = ""
    for i, f in enumerate(np.sort(mesh.facets, axis=1).tolist()):
        f = tuple(f)
        if f not in expected:
            offenders.append(i)
            detail = detail or f"facet {i} {f} is not a boundary triangle"
        elif given[f] > 1:
            offenders.append(i)
            detail = detail or f"facet {i} {f} is listed {given[f]} times"
    missing = [f for f in expected if f not in given]
    if missing and not detail:
        detail = f"boundary triangle {missing[0]} has no facet record"
    checks.append(Check("boundary facets", not offenders and not missing, detail, tuple(offenders)))

    checks.append(Check(
        "non-empty elastic Dirichlet",
        bool(np.any(mesh.elastic_class == BoundaryClass.DIRICHLET)),
        "" if np.any(mesh.elastic_class == BoundaryClass.DIRICHLET) else "no facet is elastic-Dirichlet",
    ))
    checks.append(Check(
        "non-empty magnetic Dirichlet",
        bool(np.any(mesh.magnetic_class == BoundaryClass.DIRICHLET)),
        "" if np.any(mesh.magnetic_class == BoundaryClass.DIRICHLET) else "no facet is magnetic-Dirichlet",
    ))
    return ValidationReport(tuple(checks))


def require_valid(mesh: Mesh, require_dirichlet: bool = True) -> Mesh:
    report = validate_mesh(mesh)
    failures = report.failures()
    if not require_dirichlet:
        failures = [c for c in failures if "Dirichlet" not in c.name]
    if failures:
        first = failures[0]
        raise MeshValidationError(f"{first.name}: {first.detail}")
    return mesh


def bounding_cube_side(mesh: Mesh) -> float:
    """Side of the smallest axis-aligned cube that contains the mesh."""
    if mesh.num_nodes == 0:
        raise ValueError("empty mesh has no bounding cube")
    return float(np.max(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))


def write_mesh(mesh: Mesh, stream: TextIO | None = None) -> str:
    """Serialize to the ASCII ``meshfmt 1`` format; floats round-trip exactly."""
    out = io.StringIO()
    out.write("meshfmt 1\n")
    out.write(f"nodes {mesh.num_nodes}\n")
    for x, y, z in mesh.nodes.tolist():
        out.write(f"{x!r} {y!r} {z!r}\n")
    out.write(f"tets {mesh.num_tets}\n")
    for t in mesh.tets.tolist():
        out.write("{} {} {} {}\n".format(*t))
    out.write(f"facets {len(mesh.facets)}\n")
    for f, e, m in zip(mesh.facets.tolist(), mesh.elastic_class.tolist(), mesh.magnetic_class.tolist()):
        out.write(f"{f[0]} {f[1]} {f[2]} {e} {m}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def _records(lines: Iterable[str]):
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line:
            yield number, line.split()


def read_mesh(text: str | TextIO) -> Mesh:
    """Parse the ASCII ``meshfmt 1`` format and validate the result.

    Raises:
        MeshParseError: malformed header, count or record (with line number).
        MeshValidationError: a mesh invariant fails.
    """
    if not isinstance(text, str):
        text = text.read()
    rows = _records(text.splitlines())
    last_line = [0]

    def next_row(expect: str):
        try:
            number, tokens = next(rows)
        except StopIteration:
            raise MeshParseError(f"unexpected end of input, expected {expect}", last_line[0] + 1) from None
        last_line[0] = number
        return number, tokens

    number, tokens = next_row("header")
    if tokens != ["meshfmt", "1"]:
        raise MeshParseError(f"expected header 'meshfmt 1', got {' '.join(tokens)!r}", number)

    def section(keyword: str, width: int, cast):
        number, tokens = next_row(f"'{keyword} <count>'")
        if len(tokens) != 2 or tokens[0] != keyword:
            raise MeshParseError(f"expected '{keyword} <count>'", number)
        try:
            count = int(tokens[1])
        except ValueError:
            raise MeshParseError(f"bad {keyword} count {tokens[1]!r}", number) from None
        if count < 0:
            raise MeshParseError(f"negative {keyword} count", number)
        data = []
        for _ in range(count):
            number, tokens = next_row(f"{keyword} record")
            if len(tokens) != width:
                raise MeshParseError(f"{keyword} record needs {width} fields, got {len(tokens)}", number)
            try:
                data.append([cast(t) for t in tokens])
            except ValueError:
                raise MeshParseError(f"unparsable {keyword} record", number) from None
        return data

    nodes = section("nodes", 3, float)
    tets = section("tets", 4, int)
    facets = section("facets", 5, int)
    for number, tokens in rows:
        raise MeshParseError("trailing content after facets section", number)

    facets = np.array(facets, dtype=np.int64).reshape(-1, 5)
    flags = facets[:, 3:]
    bad = np.flatnonzero(np.any((flags != 0) & (flags != 1), axis=1))
    if len(bad):
        raise MeshValidationError(f"facet {bad[0]} has a boundary flag outside {{0, 1}}")
    mesh = Mesh(np.array(nodes).reshape(-1, 3), np.array(tets).reshape(-1, 4),
                facets[:, :3], flags[:, 0], flags[:, 1])
    return require_valid(mesh)
