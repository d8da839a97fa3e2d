import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mefem.errors import MeshParseError, MeshValidationError
from mefem.mesh import (CUBE_FACES, BoundaryClass, Mesh, bounding_cube_side, boundary_faces,
                        face_of_facets, generate_unit_cube_mesh, read_mesh, validate_mesh, write_mesh)


@pytest.mark.parametrize("n, nodes, tets, facets", [(1, 8, 6, 12), (2, 27, 48, 48), (3, 64, 162, 108)])
def test_cube_counts(n, nodes, tets, facets):
    mesh = generate_unit_cube_mesh(n)
    assert (mesh.num_nodes, mesh.num_tets, len(mesh.facets)) == (nodes, tets, facets)


def test_single_cell_dirichlet_face_has_two_facets():
    mesh = generate_unit_cube_mesh(1)
    assert np.sum(mesh.elastic_class == BoundaryClass.DIRICHLET) == 2
    assert np.sum(mesh.magnetic_class == BoundaryClass.DIRICHLET) == 2


@settings(max_examples=8, deadline=None)
@given(st.integers(min_value=1, max_value=4))
def test_volumes_positive_and_fill_cube(n):
    vol = generate_unit_cube_mesh(n).tet_volumes()
    assert np.all(vol > 0)
    assert vol.sum() == pytest.approx(1.0, rel=1e-13)


def test_every_tet_contains_the_cell_diagonal():
    mesh = generate_unit_cube_mesh(1)
    for tet in mesh.tets:
        assert 0 in tet and 7 in tet


@pytest.mark.parametrize("n", [1, 2, 3])
def test_boundary_is_closed(n):
    mesh = generate_unit_cube_mesh(n)
    tri = mesh.nodes[mesh.facets]
    area_vectors = 0.5 * np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    np.testing.assert_allclose(area_vectors.sum(axis=0), 0.0, atol=1e-14)
    assert np.sum(np.linalg.norm(area_vectors, axis=1)) == pytest.approx(6.0)


@pytest.mark.parametrize("n", [1, 3])
def test_facets_point_outward(n):
    mesh = generate_unit_cube_mesh(n)
    tri = mesh.nodes[mesh.facets]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    outward = tri.mean(axis=1) - 0.5
    assert np.all(np.einsum("ij,ij->i", normal, outward) > 0)


def test_face_tags_cover_every_face():
    mesh = generate_unit_cube_mesh(2)
    faces = face_of_facets(mesh.nodes, mesh.facets)
    assert sorted(set(faces)) == sorted(CUBE_FACES)
    assert all(faces.count(f) == 8 for f in CUBE_FACES)


def test_dirichlet_selection_follows_faces():
    mesh = generate_unit_cube_mesh(2, elastic_dirichlet="x0 y1", magnetic_dirichlet="all")
    faces = face_of_facets(mesh.nodes, mesh.facets)
    expected = [BoundaryClass.DIRICHLET if f in ("x0", "y1") else BoundaryClass.NEUMANN for f in faces]
    np.testing.assert_array_equal(mesh.elastic_class, expected)
    assert np.all(mesh.magnetic_class == BoundaryClass.DIRICHLET)


@pytest.mark.parametrize("selector", ["", "w0", ["x0", "q1"]])
def test_bad_face_selectors(selector):
    with pytest.raises(ValueError):
        generate_unit_cube_mesh(1, elastic_dirichlet=selector)


def test_write_read_round_trip():
    mesh = generate_unit_cube_mesh(2, "x0 z1", "y0")
    mesh = mesh.with_nodes(mesh.nodes * np.array([1.0, 0.3, 1.0 / 3.0]))
    text = write_mesh(mesh)
    again = read_mesh(io.StringIO(text))
    assert again == mesh
    assert write_mesh(again) == text


def test_write_to_stream():
    mesh = generate_unit_cube_mesh(1)
    buf = io.StringIO()
    assert write_mesh(mesh, buf) == buf.getvalue()


def test_mesh_arrays_are_read_only():
    mesh = generate_unit_cube_mesh(1)
    with pytest.raises(ValueError):
        mesh.nodes[0, 0] = 3.0


def _corrupt(text, line_no, new):
    lines = text.splitlines()
    lines[line_no - 1] = new
    return "\n".join(lines) + "\n"


def test_parse_errors_carry_line_numbers():
    text = write_mesh(generate_unit_cube_mesh(1))
    with pytest.raises(MeshParseError) as exc:
        read_mesh(_corrupt(text, 1, "meshfmt 2"))
    assert exc.value.line == 1
    with pytest.raises(MeshParseError) as exc:
        read_mesh(_corrupt(text, 4, "0.0 1.0"))
    assert exc.value.line == 4
    with pytest.raises(MeshParseError) as exc:
        read_mesh(_corrupt(text, 12, "0 1 2 x"))
    assert exc.value.line == 12
    with pytest.raises(MeshParseError):
        read_mesh("meshfmt 1\nnodes 2\n0 0 0\n")


def test_trailing_content_rejected():
    text = write_mesh(generate_unit_cube_mesh(1)) + "extra line\n"
    with pytest.raises(MeshParseError):
        read_mesh(text)


def test_out_of_range_index_detected():
    mesh = generate_unit_cube_mesh(1)
    tets = mesh.tets.copy()
    tets[3, 2] = 99
    report = validate_mesh(Mesh(mesh.nodes, tets, mesh.facets, mesh.elastic_class, mesh.magnetic_class))
    assert not report["index range"].passed
    assert report["index range"].offenders == (3,)


def test_inverted_tet_detected():
    mesh = generate_unit_cube_mesh(1)
    tets = mesh.tets.copy()
    tets[2, [2, 3]] = tets[2, [3, 2]]
    bad = Mesh(mesh.nodes, tets, boundary_faces(tets), mesh.elastic_class, mesh.magnetic_class)
    report = validate_mesh(bad)
    assert not report["positive volume"].passed
    assert report["positive volume"].offenders == (2,)
    with pytest.raises(MeshValidationError, match="positive volume"):
        read_mesh(write_mesh(bad))


def test_missing_facet_detected():
    mesh = generate_unit_cube_mesh(1)
    bad = Mesh(mesh.nodes, mesh.tets, mesh.facets[1:], mesh.elastic_class[1:], mesh.magnetic_class[1:])
    assert not validate_mesh(bad)["boundary facets"].passed


def test_interior_face_as_facet_detected():
    mesh = generate_unit_cube_mesh(1)
    facets = mesh.facets.copy()
    facets[0] = mesh.tets[0, :3]
    bad = Mesh(mesh.nodes, mesh.tets, facets, mesh.elastic_class, mesh.magnetic_class)
    check = validate_mesh(bad)["boundary facets"]
    assert not check.passed and 0 in check.offenders


def test_empty_dirichlet_detected():
    mesh = generate_unit_cube_mesh(1)
    neumann = np.full(len(mesh.facets), BoundaryClass.NEUMANN)
    report = validate_mesh(mesh.with_classes(elastic_class=neumann))
    assert not report["non-empty elastic Dirichlet"].passed
    assert report["non-empty magnetic Dirichlet"].passed


def test_valid_mesh_passes_every_check():
    assert validate_mesh(generate_unit_cube_mesh(2)).passed


def test_bounding_cube_side():
    mesh = generate_unit_cube_mesh(2)
    assert bounding_cube_side(mesh) == 1.0
    stretched = mesh.with_nodes(mesh.nodes * np.array([2.0, 0.5, 1.0]))
    assert bounding_cube_side(stretched) == 2.0
