"""Drivers shared by the `map`, `conformal` and `area` commands."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from sphereflow._config import PipelineConfig
from sphereflow._helpers import ensure_output_dir, format_t, write_trace
from sphereflow.distortion import DistortionReport, distortion_report, emit_report
from sphereflow.errors import stage
from sphereflow.mesh import HalfedgeMesh, load_mesh, write_mesh
from sphereflow.omt import TransportMap, balanced_map
from sphereflow.weld import SphericalEmbedding, conformal_spherical_map

logger = logging.getLogger(__name__)


@dataclass
class MapOutput:
    t: float
    mesh_path: Path
    report_path: Path
    report: DistortionReport
    trace_paths: list[Path] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "mesh": str(self.mesh_path),
            "report": str(self.report_path),
            "angle_stat": round(self.report.angle_stat, 6),
            "area_stat": round(self.report.area_stat, 6),
            "flipped_faces": len(self.report.jacobian.flipped_faces),
        }


def conformal_stage(
    mesh: HalfedgeMesh, config: PipelineConfig, timings: dict[str, float]
) -> SphericalEmbedding:
    with stage("conformal"):
        return conformal_spherical_map(
            mesh,
            landmarks=config.landmarks,
            eps_yamabe=config.eps_yamabe,
            seed=config.seed,
            timings=timings,
        )


def write_conformal_traces(conformal: SphericalEmbedding, config: PipelineConfig) -> list[Path]:
    pipeline = conformal.pipeline
    if pipeline is None:
        return []
    paths = []
    for k, riemann in enumerate(pipeline.riemann):
        path = config.output_dir / f"{config.name}_yamabe_disk{k}.csv"
        paths.append(write_trace(riemann.annulus.flow.trace, path))
    path = config.output_dir / f"{config.name}_centering.csv"
    paths.append(write_trace(pipeline.centering.trace, path))
    return paths


def _solver_details(conformal: SphericalEmbedding, transport: TransportMap) -> dict[str, Any]:
    details: dict[str, Any] = {}
    if conformal.pipeline is not None:
        details["seam_error"] = float(conformal.pipeline.welded.seam_error)
        details["centering_iterations"] = conformal.pipeline.centering.iterations
    if transport.transport is not None:
        details["omt_iterations"] = transport.transport.iterations
        details["omt_residual"] = float(transport.transport.residual)
    return {"solver": details}


def map_at_t(
    mesh: HalfedgeMesh,
    conformal: SphericalEmbedding,
    config: PipelineConfig,
    t: float,
    suffix: Optional[str] = None,
) -> MapOutput:
    """Balanced map at `t` written as `<name>_<suffix>.obj` with its JSON report."""
    timings = dict(conformal.timings)
    start = time.perf_counter()
    with stage("transport", timings):
        transport = balanced_map(
            mesh,
            conformal,
            t,
            clip_radius=config.clip_radius,
            tol=config.eps_omt,
            landmarks=config.landmarks,
        )
    runtime = sum(conformal.timings.values()) + time.perf_counter() - start
    suffix = suffix or f"t{format_t(t)}"
    base = f"{config.name}_{suffix}"
    with stage("distortion", timings):
        report = distortion_report(
            mesh,
            transport.embedding.positions,
            model=config.name,
            t=t,
            runtime_seconds=runtime if config.timings else None,
            stage_timings=timings if config.timings else None,
        )
        report.extra.update(_solver_details(conformal, transport))
    mesh_path = write_mesh(mesh, config.output_dir / f"{base}.obj", transport.embedding.positions)
    report_path = emit_report(report, config.output_dir / f"{base}.report.json")
    traces = []
    if config.trace and transport.transport is not None:
        trace_path = config.output_dir / f"{base}.omt.csv"
        traces.append(write_trace(transport.transport.trace, trace_path))
    logger.info("t=%s: angle %.4f, area %.4f", format_t(t), report.angle_stat, report.area_stat)
    return MapOutput(t, mesh_path, report_path, report, traces)


def run_sphere_map(config: PipelineConfig) -> list[MapOutput]:
    """Conformal map once, then one balanced map per t value (in parallel up to
    `config.threads`). Outputs come back in t order."""
    ensure_output_dir(config.output_dir)
    with stage("load"):
        mesh = load_mesh(config.input_path)
    timings: dict[str, float] = {}
    conformal = conformal_stage(mesh, config, timings)
    traces = write_conformal_traces(conformal, config) if config.trace else []
    with ThreadPoolExecutor(max_workers=min(config.threads, len(config.t_values))) as pool:
        outputs = list(pool.map(lambda t: map_at_t(mesh, conformal, config, t), config.t_values))
    if outputs:
        outputs[0].trace_paths[:0] = traces
    return outputs
