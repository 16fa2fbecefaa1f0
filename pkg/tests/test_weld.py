import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from sphereflow import shapes
from sphereflow.distortion import angle_distortion
from sphereflow.errors import (
    MeshFormatError,
    MeshIOError,
    TopologyError,
    UndefinedOperationError,
    WeldingError,
)
from sphereflow.flow import riemann_map
from sphereflow.segment import segment_mesh
from sphereflow.weld import (
    INFINITY,
    TO_DISK,
    ExtendedComplex,
    MobiusTransform,
    WeldingSignature,
    conformal_spherical_map,
    disk_half_plane,
    inverse_stereographic,
    landmark_rotation,
    mobius_normalize,
    plane_to_sphere,
    sphere_to_plane,
    spherical_signed_areas,
    stereographic,
    unzip_map,
    zip_map,
    zipper_weld,
)
from tests.utils import torus


@pytest.fixture(scope="module")
def welded(icosphere):
    split = segment_mesh(icosphere)
    disks = [riemann_map(split.disk0), riemann_map(split.disk1)]
    signature = WeldingSignature.from_split(split)
    return split, zipper_weld(disks[0].embedding, disks[1].embedding, signature)


def test_extended_complex_infinity():
    infinity = ExtendedComplex.infinity()
    assert infinity + 1 == infinity
    assert ExtendedComplex(1) / 0 == infinity
    assert ExtendedComplex(2) / infinity == 0
    assert -infinity == infinity
    assert ExtendedComplex(3) + 2j == 3 + 2j


@pytest.mark.parametrize(
    "operation",
    [
        lambda inf: inf * 0,
        lambda inf: inf - inf,
        lambda inf: ExtendedComplex(0) / 0,
        lambda inf: inf / inf,
    ],
)
def test_extended_complex_undefined(operation):
    with pytest.raises(UndefinedOperationError):
        operation(ExtendedComplex.infinity())


def test_extended_complex_rejects_nan():
    with pytest.raises(UndefinedOperationError):
        ExtendedComplex(complex(math.nan, 0.0))


def test_three_point_transform():
    source = (0.0, 1.0, INFINITY)
    target = (1j, -1.0, 0.0)
    transform = MobiusTransform.three_point(source, target)
    for z, w in zip(source, target):
        assert transform(z).isclose(w, tol=1e-9)


def test_mobius_inverse_and_apply():
    transform = MobiusTransform(2, 1j, 0.5, 3)
    assert (transform @ transform.inverse()).isclose(MobiusTransform.identity())
    z = np.array([0.0, 1.5 - 2j, INFINITY, -5.0])
    expected = np.array([complex(transform(p)) for p in z])
    assert np.allclose(transform.apply(z), expected)


def test_degenerate_mobius():
    with pytest.raises(UndefinedOperationError):
        MobiusTransform(1, 2, 2, 4)


def test_disk_half_plane():
    assert TO_DISK(1j).isclose(0)
    assert TO_DISK(INFINITY).isclose(1)
    assert disk_half_plane(0, "to_half_plane").isclose(1j)
    assert disk_half_plane(disk_half_plane(0.2 + 3j), "to_half_plane").isclose(0.2 + 3j)
    with pytest.raises(ValueError):
        disk_half_plane(0, "sideways")


def test_zip_map_glues_the_interval():
    w = zip_map(np.array([1.0, -1.0, 0.5, -0.5]))
    assert np.allclose(w[:2], 0.0)
    assert w[2] == pytest.approx(w[3])
    assert w[2] == pytest.approx(1j * math.sqrt(0.75))


def test_unzip_map_branch():
    assert np.allclose(unzip_map(np.array([1j, 1.0, -1.0])), [0.0, math.sqrt(2), -math.sqrt(2)])


def test_unzip_inverts_zip():
    w = np.array([0.3 + 0.7j, -2.0 + 0.1j, 4j])
    assert np.allclose(unzip_map(zip_map(w)), w)


def test_zip_map_rejects_lower_half_plane():
    with pytest.raises(WeldingError):
        zip_map(np.array([0.5 - 0.5j]))


def test_stereographic():
    points = stereographic(np.array([0.0, INFINITY, 1.0, 1j]))
    assert np.allclose(points[0], [0.0, 0.0, -1.0])
    assert np.allclose(points[1], [0.0, 0.0, 1.0])
    assert np.allclose(points[2:, 2], 0.0)


def test_inverse_stereographic_round_trip():
    z = np.array([0.3 + 0.4j, 5.0 - 2.0j, -30j])
    assert np.allclose(inverse_stereographic(stereographic(z)), z)
    assert np.isinf(inverse_stereographic(np.array([[0.0, 0.0, 1.0]]))[0])
    assert np.allclose(sphere_to_plane(plane_to_sphere(z)), z)


@pytest.mark.parametrize("center", [0.0, 2.0 + 1.0j, -40.0j])
def test_plane_to_sphere_keeps_orientation(center):
    triangle = center + 0.01 * np.array([0.0, 1.0, 1j])
    area = spherical_signed_areas(plane_to_sphere(triangle), np.array([[0, 1, 2]]))
    assert area[0] > 0


@pytest.mark.parametrize(
    "first, second",
    [([0, 1, 2], [3, 4, 5]), ([0, 1, 2, 2], [3, 4, 5, 6]), ([0, 1, 2, 3], [4, 5, 6])],
)
def test_welding_signature_rejects(first, second):
    with pytest.raises(WeldingError):
        WeldingSignature(first, second)


def test_welding_signature_file(tmp_path):
    signature = WeldingSignature([0, 1, 2, 3], [7, 6, 5, 4])
    loaded = WeldingSignature.load(signature.write(tmp_path / "seam.csv"))
    assert np.array_equal(loaded.first, signature.first)
    assert np.array_equal(loaded.second, signature.second)


def test_welding_signature_bad_file(tmp_path):
    path = tmp_path / "seam.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(MeshFormatError):
        WeldingSignature.load(path)
    with pytest.raises(MeshIOError):
        WeldingSignature.load(tmp_path / "missing.csv")


def test_landmark_rotation():
    top = np.array([1.0, 2.0, 2.0]) / 3.0
    front = np.array([0.0, 1.0, 0.0])
    rotation = landmark_rotation(top, front)
    assert np.allclose(rotation @ rotation.T, np.eye(3))
    assert np.allclose(rotation @ top, [0.0, 0.0, 1.0])
    moved = rotation @ front
    assert moved[1] == pytest.approx(0.0, abs=1e-12)
    assert moved[0] > 0


def test_landmark_rotation_antipodal():
    with pytest.raises(WeldingError):
        landmark_rotation(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]))


def test_mobius_normalize(icosphere):
    weights = 2.0 + icosphere.positions[:, 0]
    points, centering = mobius_normalize(icosphere.positions, weights, landmarks=(0, 5))
    assert centering.iterations > 0
    assert centering.center_norm < 1e-6
    assert np.allclose(np.linalg.norm(points, axis=1), 1.0)
    assert np.allclose(points[0], [0.0, 0.0, 1.0])
    assert abs(points[5, 1]) < 1e-12
    center = (weights[:, None] * points).sum(axis=0) / weights.sum()
    assert np.linalg.norm(center) < 1e-5


def test_zipper_weld(welded):
    split, result = welded
    assert result.mesh.is_closed
    assert result.mesh.euler_characteristic == 2
    assert result.seam_error <= 1e-6
    assert np.flatnonzero(np.isinf(result.positions)).tolist() == [result.infinity_vertex]
    expected = split.disk0.n_vertices + split.disk1.n_vertices - len(split.seam)
    assert result.mesh.n_vertices == expected


def test_zipper_weld_orientation(welded):
    _, result = welded
    sphere = plane_to_sphere(result.positions)
    assert (spherical_signed_areas(sphere, result.mesh.faces) > 0).all()


def test_conformal_spherical_map(icosphere, conformal_icosphere):
    assert conformal_icosphere.norm_error() < 1e-12
    assert conformal_icosphere.flipped_faces().size == 0
    assert conformal_icosphere.total_area() == pytest.approx(4.0 * math.pi)
    angle = angle_distortion(icosphere, conformal_icosphere.positions)
    assert np.abs(angle.values).mean() < 0.05
    stages = set(conformal_icosphere.timings)
    assert {"segment", "riemann", "weld", "stereographic", "normalize"} <= stages


def _rms_after_rotation(reference, points):
    rotation, _ = Rotation.align_vectors(reference, points)
    return float(np.sqrt(np.mean(np.sum((rotation.apply(points) - reference) ** 2, axis=1))))


def test_conformal_spherical_map_round_trip(icosphere, conformal_icosphere):
    assert _rms_after_rotation(icosphere.positions, conformal_icosphere.positions) < 5e-2


@pytest.mark.slow
def test_conformal_spherical_map_round_trip_full_resolution():
    sphere = shapes.icosphere(5)
    embedding = conformal_spherical_map(sphere)
    assert embedding.flipped_faces().size == 0
    assert embedding.total_area() == pytest.approx(4.0 * math.pi, abs=1e-6)
    assert _rms_after_rotation(sphere.positions, embedding.positions) < 1e-2


def test_conformal_spherical_map_landmarks(icosphere):
    embedding = conformal_spherical_map(icosphere, landmarks=(3, 40))
    assert np.allclose(embedding.positions[3], [0.0, 0.0, 1.0])
    assert abs(embedding.positions[40, 1]) < 1e-9
    assert embedding.positions[40, 0] > 0


def test_conformal_spherical_map_rejects_torus():
    with pytest.raises(TopologyError) as e:
        conformal_spherical_map(torus())

    assert "Euler characteristic 0" in e.value.message
