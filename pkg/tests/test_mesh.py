import math

import numpy as np
import pytest

from sphereflow import shapes
from sphereflow.errors import (
    BoundaryEdgeError,
    DegenerateGeometryError,
    MeshFormatError,
    MeshIOError,
    NonManifoldError,
    NonTriangularFaceError,
    OrientationError,
)
from sphereflow.mesh import (
    HalfedgeMesh,
    check_triangle_inequality,
    corner_angles,
    cotan_laplacian,
    diagonal_switch,
    face_areas,
    gauss_bonnet_residual,
    is_delaunay,
    load_mesh,
    make_delaunay,
    positions_face_areas,
    total_area,
    vertex_area_weights,
    vertex_curvature,
    write_mesh,
    write_polyline,
    write_vertex_values,
)


def _edge(mesh, a, b):
    ev = mesh.edge_vertices().tolist()
    return next(e for e, (i, j) in enumerate(ev) if {i, j} == {a, b})


def _rhombus(height):
    positions = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, height], [1.0, -height]])
    return HalfedgeMesh([(0, 1, 2), (1, 0, 3)], positions)


def test_tetrahedron_counts():
    mesh = shapes.tetrahedron()
    assert (mesh.n_vertices, mesh.n_edges, mesh.n_faces) == (4, 6, 4)
    assert mesh.euler_characteristic == 2
    assert mesh.is_closed
    assert mesh.genus() == 0
    assert mesh.boundary_loops() == []


def test_twins_are_involutive(icosphere):
    h = np.arange(3 * icosphere.n_faces)
    assert (icosphere.twin >= 0).all()
    assert np.array_equal(icosphere.twin[icosphere.twin], h)
    assert np.array_equal(icosphere.edge[icosphere.twin], icosphere.edge)


@pytest.mark.parametrize("subdivisions, faces", [(0, 20), (1, 80), (2, 320)])
def test_icosphere_counts(subdivisions, faces):
    mesh = shapes.icosphere(subdivisions)
    assert mesh.n_faces == faces
    assert mesh.euler_characteristic == 2
    assert np.allclose(np.linalg.norm(mesh.positions, axis=1), 1.0)


def test_gauss_bonnet(ellipsoid):
    curvature = vertex_curvature(ellipsoid, corner_angles(ellipsoid, ellipsoid.lengths))
    assert curvature.sum() == pytest.approx(4.0 * math.pi, abs=1e-9)
    assert gauss_bonnet_residual(ellipsoid, curvature) < 1e-9


def test_face_areas_match_positions(ellipsoid):
    intrinsic = face_areas(ellipsoid, ellipsoid.lengths)
    assert np.allclose(intrinsic, positions_face_areas(ellipsoid.positions, ellipsoid.faces))
    assert intrinsic.sum() == pytest.approx(total_area(ellipsoid))


def test_corner_angles_sum_to_pi(ellipsoid):
    angles = corner_angles(ellipsoid, ellipsoid.lengths)
    assert np.allclose(angles.sum(axis=1), math.pi)


def test_flat_disk_boundary():
    mesh = shapes.flat_disk(4)
    loops = mesh.boundary_loops()
    assert len(loops) == 1
    assert len(loops[0]) == 24
    assert loops[0][0] == loops[0].min()
    assert mesh.euler_characteristic == 1
    assert mesh.genus() == 0


def test_flat_cylinder_is_an_annulus():
    mesh = shapes.flat_cylinder(1.0, 4, 16)
    assert mesh.euler_characteristic == 0
    assert len(mesh.boundary_loops()) == 2
    assert mesh.genus() == 0


def test_non_triangular_face():
    with pytest.raises(NonTriangularFaceError):
        HalfedgeMesh([(0, 1, 2, 3)])


def test_non_manifold_edge():
    with pytest.raises(NonManifoldError):
        HalfedgeMesh([(0, 1, 2), (1, 0, 3), (0, 1, 4)])


def test_inconsistent_orientation():
    with pytest.raises(OrientationError):
        HalfedgeMesh([(0, 1, 2), (0, 1, 3)])


def test_repeated_vertex():
    with pytest.raises(DegenerateGeometryError) as e:
        HalfedgeMesh([(0, 1, 2), (2, 3, 3)])

    assert e.value.faces == [1]


def test_triangle_inequality():
    mesh = shapes.tetrahedron()
    lengths = mesh.lengths.copy()
    lengths[0] = 10.0
    with pytest.raises(DegenerateGeometryError):
        check_triangle_inequality(mesh, lengths)


def test_diagonal_switch():
    mesh = HalfedgeMesh(
        [(0, 1, 2), (1, 0, 3)],
        np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2], [0.5, -math.sqrt(3) / 2]]),
    )
    edge = _edge(mesh, 0, 1)
    lengths = mesh.lengths.copy()
    new_length = diagonal_switch(mesh, lengths, edge)
    assert new_length == pytest.approx(math.sqrt(3.0))
    assert {int(v) for v in mesh.edge_vertices()[edge]} == {2, 3}
    interior = mesh.twin >= 0
    assert interior.sum() == 2
    assert np.array_equal(mesh.twin[mesh.twin[interior]], np.flatnonzero(interior))
    assert mesh.edge[mesh.twin[interior]].tolist() == [edge, edge]


def test_diagonal_switch_boundary_edge():
    mesh = _rhombus(1.0)
    edge = _edge(mesh, 1, 2)
    with pytest.raises(BoundaryEdgeError):
        diagonal_switch(mesh, mesh.lengths.copy(), edge)


def test_make_delaunay():
    mesh = _rhombus(0.2)
    lengths = mesh.lengths.copy()
    assert not is_delaunay(mesh, lengths, _edge(mesh, 0, 1))
    assert make_delaunay(mesh, lengths) == 1
    edge = _edge(mesh, 2, 3)
    assert lengths[edge] == pytest.approx(0.4)
    assert is_delaunay(mesh, lengths, edge)


def test_make_delaunay_keeps_delaunay_mesh(icosphere):
    mesh = icosphere.copy()
    assert make_delaunay(mesh, mesh.lengths.copy()) == 0


def test_vertex_area_weights(ellipsoid):
    assert vertex_area_weights(ellipsoid).sum() == pytest.approx(total_area(ellipsoid))


def test_cotan_laplacian(icosphere):
    laplacian = cotan_laplacian(icosphere, corner_angles(icosphere, icosphere.lengths))
    assert np.allclose(np.asarray(laplacian.sum(axis=1)).ravel(), 0.0)
    assert abs(laplacian - laplacian.T).max() < 1e-12


def test_submesh():
    mesh = shapes.octahedron()
    mask = mesh.positions[mesh.faces].mean(axis=1)[:, 2] > 0
    half, vertex_map = mesh.submesh(mask)
    assert half.n_faces == 4
    assert np.array_equal(half.positions, mesh.positions[vertex_map])
    assert [len(loop) for loop in half.boundary_loops()] == [4]


@pytest.mark.parametrize("suffix", ["obj", "off"])
def test_write_and_load(suffix, ellipsoid, tmp_path):
    path = write_mesh(ellipsoid, tmp_path / f"ellipsoid.{suffix}")
    loaded = load_mesh(path)
    assert np.array_equal(loaded.faces, ellipsoid.faces)
    assert np.array_equal(loaded.positions, ellipsoid.positions)


def test_write_planar_positions(tmp_path):
    mesh = shapes.square_grid(2)
    planar = mesh.positions[:, 0] + 1j * mesh.positions[:, 1]
    loaded = load_mesh(write_mesh(mesh, tmp_path / "grid.obj", planar))
    assert np.array_equal(loaded.positions, mesh.positions)


def test_load_missing_file(tmp_path):
    with pytest.raises(MeshIOError):
        load_mesh(tmp_path / "missing.obj")


def test_load_unknown_format(tmp_path):
    path = tmp_path / "mesh.stl"
    path.write_text("solid\n")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_load_quad(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(NonTriangularFaceError):
        load_mesh(path)


def test_load_bad_number(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 zero 0\n")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_load_missing_off_header(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("3 1 0\n")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_write_polyline(tmp_path):
    path = write_polyline(np.eye(3), tmp_path / "loop.obj")
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[-1] == "l 1 2 3 1"


def test_write_vertex_values(tmp_path):
    path = write_vertex_values(np.array([0.5, -1.0]), tmp_path / "values.csv", column="u")
    assert path.read_text().splitlines() == ["vertex,u", "0,0.5", "1,-1"]
