import json
import math

import numpy as np
import pytest

from sphereflow import shapes
from sphereflow.distortion import (
    AREA_STAT_NOTE,
    HISTOGRAM_BINS,
    SCHEMA_VERSION,
    DistortionField,
    Histogram,
    angle_distortion,
    area_distortion,
    distortion_report,
    emit_report,
    format_summary,
    jacobian_statistics,
    load_report,
)
from sphereflow.errors import ConnectivityMismatchError, MeshIOError
from tests.utils import read_rows


@pytest.fixture
def grid():
    return shapes.square_grid(4)


def test_identity_map(grid):
    stats = jacobian_statistics(grid, grid.positions)
    assert stats.angle_stat == pytest.approx(2.0)
    assert stats.area_stat == pytest.approx(2.0)
    assert stats.flipped_faces.size == 0
    assert np.allclose(area_distortion(grid, grid).values, 0.0)
    assert np.allclose(angle_distortion(grid, grid).values, 0.0)


@pytest.mark.parametrize(
    "scale, angle_stat, area_stat",
    [((2.0, 1.0), 2.5, 2.5), ((2.0, 0.5), 4.25, 2.0), ((3.0, 3.0), 2.0, 9.0 + 1.0 / 9.0)],
)
def test_linear_stretch(grid, scale, angle_stat, area_stat):
    image = grid.positions * np.array([scale[0], scale[1], 1.0])
    stats = jacobian_statistics(grid, image)
    assert stats.angle_stat == pytest.approx(angle_stat)
    assert stats.area_stat == pytest.approx(area_stat)
    assert np.allclose(np.sort(stats.singular_values, axis=1), np.sort(scale))


def test_uniform_scale_log_ratios(grid):
    image = 1.5 * grid.positions[:, :2]
    assert np.allclose(angle_distortion(grid, image).values, 0.0)
    assert np.allclose(area_distortion(grid, image).values, 2.0 * math.log(1.5))


def test_complex_image(grid):
    image = grid.positions[:, 0] + 1j * grid.positions[:, 1]
    assert jacobian_statistics(grid, image).angle_stat == pytest.approx(2.0)


def test_mirrored_image_flips_every_face(grid):
    image = grid.positions * np.array([-1.0, 1.0, 0.0])
    stats = jacobian_statistics(grid, image)
    assert stats.flipped_faces.size == grid.n_faces


def test_sphere_to_itself(icosphere):
    stats = jacobian_statistics(icosphere, icosphere.positions)
    assert stats.flipped_faces.size == 0
    assert stats.angle_stat == pytest.approx(2.0)


def test_mismatched_faces(grid):
    with pytest.raises(ConnectivityMismatchError):
        distortion_report(grid, shapes.square_grid(3))


def test_mismatched_vertex_count(grid):
    with pytest.raises(ConnectivityMismatchError):
        area_distortion(grid, grid.positions[:-1])


def test_histogram():
    values = np.linspace(-1.0, 3.0, 57)
    histogram = Histogram.from_samples(values)
    assert len(histogram.counts) == HISTOGRAM_BINS
    assert histogram.counts.sum() == 57
    assert histogram.edges[0] == pytest.approx(-3.0)
    assert histogram.edges[-1] == pytest.approx(3.0)


def test_histogram_of_zeros():
    histogram = Histogram.from_samples(np.zeros(4))
    assert histogram.counts.sum() == 4
    assert histogram.edges[0] == -0.5


def test_distortion_field_summary():
    field = DistortionField.from_values(np.array([-1.0, 0.0, 1.0]))
    assert field.summary.mean == 0.0
    assert field.summary.max == 1.0
    assert field.to_dict()["summary"]["min"] == -1.0


def test_report_to_dict(icosphere, conformal_icosphere):
    report = distortion_report(
        icosphere, conformal_icosphere.positions, "sphere", 0.0, 1.5, {"weld": 0.5}
    )
    data = report.to_dict()
    assert data["schema_version"] == SCHEMA_VERSION
    assert data["faces"] == icosphere.n_faces
    assert data["area_stat_note"] == AREA_STAT_NOTE
    assert data["flipped_faces"] == 0
    assert sum(data["angle_hist"]["counts"]) == 3 * icosphere.n_faces
    assert sum(data["area_hist"]["counts"]) == icosphere.n_vertices
    assert data["stage_timings"] == {"weld": 0.5}
    assert "t: 0" in format_summary(report)


def test_emit_json_round_trip(grid, tmp_path):
    report = distortion_report(grid, grid.positions * 2.0, "grid")
    path = emit_report(report, tmp_path / "grid.report.json")
    data = load_report(path)
    assert data["angle_stat"] == pytest.approx(2.0)
    assert data["model"] == "grid"
    emit_report(report, tmp_path / "again.json")
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_emit_csv(grid, tmp_path):
    report = distortion_report(grid, grid.positions)
    area = read_rows(emit_report(report, tmp_path / "area.csv", "csv", "area"))
    angle = read_rows(emit_report(report, tmp_path / "angle.csv", "csv", "angle"))
    assert area[0] == "vertex,area_log_ratio"
    assert len(area) == grid.n_vertices + 1
    assert angle[0] == "face,corner,angle_log_ratio"
    assert len(angle) == 3 * grid.n_faces + 1
    assert angle[4].startswith("1,0,")


def test_emit_rejects_unknown_format(grid, tmp_path):
    report = distortion_report(grid, grid.positions)
    with pytest.raises(ValueError):
        emit_report(report, tmp_path / "r.xml", "xml")
    with pytest.raises(ValueError):
        emit_report(report, tmp_path / "r.csv", "csv", "volume")


def test_load_report_wrong_schema(tmp_path):
    path = tmp_path / "old.json"
    path.write_text(json.dumps({"schema_version": 0}))
    with pytest.raises(MeshIOError):
        load_report(path)


def test_load_report_not_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{")
    with pytest.raises(MeshIOError):
        load_report(path)
