"""Distortion of a map between two embeddings of the same mesh.

Image triangles are measured on their straight chords, including spherical images.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from numpy.typing import NDArray

from sphereflow.errors import ConnectivityMismatchError, DegenerateGeometryError, MeshIOError
from sphereflow.mesh import (
    FloatArray,
    HalfedgeMesh,
    IntArray,
    positions_face_areas,
    triangle_angles,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HISTOGRAM_BINS = 100
AREA_STAT_NOTE = "area statistic: mean of s1*s2 + 1/(s1*s2), equal to 2 when area-preserving"
SPHERE_TOLERANCE = 1e-6

Image = Union[FloatArray, NDArray[np.complex128], HalfedgeMesh]


@dataclass
class Histogram:
    edges: FloatArray
    counts: IntArray

    @classmethod
    def from_samples(cls, values: FloatArray, bins: int = HISTOGRAM_BINS) -> Histogram:
        """Uniform bins over [-max|x|, max|x|]; [-0.5, 0.5] when every sample is zero."""
        extent = float(np.abs(values).max()) if len(values) else 0.0
        if extent == 0.0:
            extent = 0.5
        counts, edges = np.histogram(values, bins=bins, range=(-extent, extent))
        return cls(edges, counts.astype(np.int64))

    def to_dict(self) -> dict[str, Any]:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist()}


@dataclass
class Summary:
    mean: float
    std: float
    min: float
    max: float

    @classmethod
    def from_samples(cls, values: FloatArray) -> Summary:
        return cls(
            float(values.mean()), float(values.std()), float(values.min()), float(values.max())
        )


@dataclass
class DistortionField:
    """Log ratios per element (vertex for area, corner for angle)."""

    values: FloatArray
    histogram: Histogram
    summary: Summary

    @classmethod
    def from_values(cls, values: FloatArray) -> DistortionField:
        return cls(values, Histogram.from_samples(values), Summary.from_samples(values))

    def to_dict(self) -> dict[str, Any]:
        return {"summary": asdict(self.summary), **self.histogram.to_dict()}


@dataclass
class JacobianStatistics:
    """Area-weighted means of the per-face singular value combinations, both >= 2."""

    angle_stat: float
    area_stat: float
    singular_values: FloatArray
    flipped_faces: IntArray

    @property
    def face_angle(self) -> FloatArray:
        s = self.singular_values
        return s[:, 0] / s[:, 1] + s[:, 1] / s[:, 0]

    @property
    def face_area(self) -> FloatArray:
        product = self.singular_values.prod(axis=1)
        return product + 1.0 / product


@dataclass
class DistortionReport:
    model: str
    faces: int
    t: Optional[float]
    area: DistortionField
    angle: DistortionField
    jacobian: JacobianStatistics
    runtime_seconds: Optional[float] = None
    stage_timings: Optional[dict[str, float]] = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def angle_stat(self) -> float:
        return self.jacobian.angle_stat

    @property
    def area_stat(self) -> float:
        return self.jacobian.area_stat

    def to_dict(self) -> dict[str, Any]:
        data = {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "faces": self.faces,
            "t": self.t,
            "angle_stat": self.angle_stat,
            "area_stat": self.area_stat,
            "area_stat_note": AREA_STAT_NOTE,
            "flipped_faces": int(len(self.jacobian.flipped_faces)),
            "angle_hist": self.angle.to_dict(),
            "area_hist": self.area.to_dict(),
            "runtime_seconds": self.runtime_seconds,
            "stage_timings": self.stage_timings,
        }
        data.update(self.extra)
        return data


def _image_positions(mesh: HalfedgeMesh, image: Image) -> FloatArray:
    if isinstance(image, HalfedgeMesh):
        if image.n_faces != mesh.n_faces or not np.array_equal(image.faces, mesh.faces):
            raise ConnectivityMismatchError(
                f"source has {mesh.n_faces} faces and image has {image.n_faces}, "
                "or their faces differ"
            )
        if image.positions is None:
            raise ValueError("the image mesh has no positions")
        positions: Any = image.positions
    else:
        positions = np.asarray(image)
    if np.iscomplexobj(positions):
        positions = np.column_stack([positions.real, positions.imag])
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[1] == 2:
        positions = np.column_stack([positions, np.zeros(len(positions))])
    if len(positions) != mesh.n_vertices:
        raise ConnectivityMismatchError(
            f"source has {mesh.n_vertices} vertices and image has {len(positions)}"
        )
    if not np.isfinite(positions).all():
        raise DegenerateGeometryError("image has non-finite positions")
    return positions


def _source_positions(mesh: HalfedgeMesh) -> FloatArray:
    if mesh.positions is None:
        raise ValueError("distortion needs source positions")
    return mesh.positions


def _one_ring_areas(positions: FloatArray, mesh: HalfedgeMesh) -> FloatArray:
    areas = positions_face_areas(positions, mesh.faces)
    return np.bincount(mesh.origin, weights=np.repeat(areas, 3), minlength=mesh.n_vertices)


def area_distortion(mesh: HalfedgeMesh, image: Image) -> DistortionField:
    """log(image one-ring area / source one-ring area) per vertex."""
    target = _one_ring_areas(_image_positions(mesh, image), mesh)
    source = _one_ring_areas(_source_positions(mesh), mesh)
    if (source <= 0).any():
        bad = np.flatnonzero(source <= 0)
        raise DegenerateGeometryError(f"zero source one-ring area at vertex {int(bad[0])}")
    if (target <= 0).any():
        bad = np.flatnonzero(target <= 0)
        raise DegenerateGeometryError(f"zero image one-ring area at vertex {int(bad[0])}")
    return DistortionField.from_values(np.log(target / source))


def _corner_angles(positions: FloatArray, faces: IntArray) -> FloatArray:
    p = positions[faces]
    sides = np.linalg.norm(p[:, [2, 0, 1]] - p[:, [1, 2, 0]], axis=2)
    return triangle_angles(sides, sides[:, [1, 2, 0]], sides[:, [2, 0, 1]])


def angle_distortion(mesh: HalfedgeMesh, image: Image) -> DistortionField:
    """log(image angle / source angle) per corner, flattened face by face."""
    target = _corner_angles(_image_positions(mesh, image), mesh.faces)
    source = _corner_angles(_source_positions(mesh), mesh.faces)
    for name, angles in (("source", source), ("image", target)):
        bad = np.flatnonzero((angles <= 0).any(axis=1))
        if bad.size:
            raise DegenerateGeometryError(f"degenerate {name} corner", faces=bad)
    return DistortionField.from_values(np.log(target / source).reshape(-1))


def _local_frames(p: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Edge vectors of each triangle in its own orthonormal frame, and its unit normal."""
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    normal = np.cross(e1, e2)
    length = np.linalg.norm(e1, axis=1)
    norm = np.linalg.norm(normal, axis=1)
    if (length <= 0).any() or (norm <= 0).any():
        bad = np.flatnonzero((length <= 0) | (norm <= 0))
        raise DegenerateGeometryError("degenerate face", faces=bad)
    normal /= norm[:, None]
    x = e1 / length[:, None]
    y = np.cross(normal, x)
    coords = np.empty((len(p), 2, 2))
    coords[:, 0, 0] = length
    coords[:, 1, 0] = 0.0
    coords[:, 0, 1] = np.einsum("ij,ij->i", e2, x)
    coords[:, 1, 1] = np.einsum("ij,ij->i", e2, y)
    return coords, normal


def _reference_normals(source: FloatArray, image: FloatArray) -> FloatArray:
    """Direction a correctly oriented image face should point to."""
    centers = image.mean(axis=1)
    if np.abs(np.linalg.norm(image.reshape(-1, 3), axis=1) - 1.0).max() < SPHERE_TOLERANCE:
        return centers
    if np.abs(image[..., 2]).max() == 0.0:
        return np.tile([0.0, 0.0, 1.0], (len(image), 1))
    return np.cross(source[:, 1] - source[:, 0], source[:, 2] - source[:, 0])


def jacobian_statistics(mesh: HalfedgeMesh, image: Image) -> JacobianStatistics:
    """Singular values of the per-face linear map from source to image triangle."""
    source = _source_positions(mesh)[mesh.faces]
    target = _image_positions(mesh, image)[mesh.faces]
    source_coords, _ = _local_frames(source)
    target_coords, target_normal = _local_frames(target)
    jacobian = target_coords @ np.linalg.inv(source_coords)
    singular = np.linalg.svd(jacobian, compute_uv=False)
    reference = _reference_normals(source, target)
    flipped = np.flatnonzero(np.einsum("ij,ij->i", target_normal, reference) < 0)
    weights = positions_face_areas(_source_positions(mesh), mesh.faces)
    stats = JacobianStatistics(0.0, 0.0, singular, flipped)
    stats.angle_stat = float(np.average(stats.face_angle, weights=weights))
    stats.area_stat = float(np.average(stats.face_area, weights=weights))
    if flipped.size:
        logger.warning("%d flipped faces in the image", flipped.size)
    return stats


def distortion_report(
    mesh: HalfedgeMesh,
    image: Image,
    model: str = "",
    t: Optional[float] = None,
    runtime_seconds: Optional[float] = None,
    stage_timings: Optional[dict[str, float]] = None,
) -> DistortionReport:
    return DistortionReport(
        model=model,
        faces=mesh.n_faces,
        t=t,
        area=area_distortion(mesh, image),
        angle=angle_distortion(mesh, image),
        jacobian=jacobian_statistics(mesh, image),
        runtime_seconds=runtime_seconds,
        stage_timings=stage_timings,
    )


def _csv_rows(report: DistortionReport, kind: str) -> list[str]:
    if kind == "area":
        return ["vertex,area_log_ratio"] + [
            f"{v},{x:.17g}" for v, x in enumerate(report.area.values.tolist())
        ]
    if kind == "angle":
        rows = ["face,corner,angle_log_ratio"]
        for i, x in enumerate(report.angle.values.tolist()):
            rows.append(f"{i // 3},{i % 3},{x:.17g}")
        return rows
    raise ValueError(f"unknown CSV kind {kind!r}; expected 'area' or 'angle'")


def emit_report(
    report: DistortionReport, path: Path, fmt: str = "json", kind: str = "area"
) -> Path:
    """Write the report as versioned JSON, or the raw per-element values of `kind` as CSV."""
    path = Path(path)
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, default=str) + "\n"
    elif fmt == "csv":
        text = "\n".join(_csv_rows(report, kind)) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected 'json' or 'csv'")
    try:
        path.write_text(text)
    except OSError as e:
        raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
    logger.info("wrote %s report %s", fmt, path)
    return path


def load_report(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise MeshIOError(f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise MeshIOError(f"{path} is not a JSON report: {e}") from e
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MeshIOError(f"{path} has report schema {version}, expected {SCHEMA_VERSION}")
    return data


def format_summary(report: DistortionReport) -> str:
    """Multi-line text used by the CLI panels."""
    lines = [
        f"Faces: {report.faces}",
        f"Angle statistic: {report.angle_stat:.6f}",
        f"Area statistic: {report.area_stat:.6f}",
        f"Flipped faces: {len(report.jacobian.flipped_faces)}",
        f"Mean |angle log ratio|: {np.abs(report.angle.values).mean():.6f}",
        f"Area log ratio std: {report.area.summary.std:.6f}",
    ]
    if report.t is not None:
        lines.insert(0, f"t: {report.t:g}")
    if report.runtime_seconds is not None and not math.isnan(report.runtime_seconds):
        lines.append(f"Runtime: {report.runtime_seconds:.2f}s")
    return "\n".join(lines)
