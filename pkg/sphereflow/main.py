from __future__ import annotations

import sys
from pathlib import Path
from typing import List, Optional, Tuple

from rich.traceback import install
from typer import Argument, Exit, Option, Typer, echo

from sphereflow import generate
from sphereflow._config import (
    CLIP_RADIUS_OPTION,
    DEFAULT_CLIP_RADIUS,
    DEFAULT_EPS_OMT,
    DEFAULT_EPS_YAMABE,
    DEFAULT_SEED,
    DEFAULT_T_VALUES,
    EPS_OMT_OPTION,
    EPS_YAMABE_OPTION,
    LANDMARKS_OPTION,
    OUTPUT_DIR_OPTION,
    RAW_OPTION,
    SEED_OPTION,
    T_OPTION,
    THREADS_OPTION,
    TIMINGS_OPTION,
    TRACE_OPTION,
    PipelineConfig,
    configure_logging,
    console,
)
from sphereflow._helpers import (
    ensure_output_dir,
    exit_on_error,
    print_panel_or_raw,
    write_json,
    write_trace,
)
from sphereflow.distortion import distortion_report, emit_report
from sphereflow.errors import stage
from sphereflow.flow import riemann_map
from sphereflow.mesh import (
    corner_angles,
    gauss_bonnet_residual,
    load_mesh,
    total_area,
    vertex_curvature,
    write_mesh,
    write_polyline,
    write_vertex_values,
)
from sphereflow.pipeline import (
    conformal_stage,
    map_at_t,
    run_sphere_map,
    write_conformal_traces,
)
from sphereflow.segment import first_eigenfunction, split_mesh, zero_level_loop
from sphereflow.weld import WeldingSignature, zipper_weld

install()

__version__ = "0.1.0"

app = Typer()
app.add_typer(generate.app, name="generate", help="Write procedural test meshes.")


def _config(
    input_path: Path,
    output_dir: Path,
    t_values: Tuple[float, ...] = DEFAULT_T_VALUES,
    eps_yamabe: float = DEFAULT_EPS_YAMABE,
    eps_omt: float = DEFAULT_EPS_OMT,
    clip_radius: float = DEFAULT_CLIP_RADIUS,
    landmarks: Optional[Tuple[int, int]] = None,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    trace: bool = False,
    timings: bool = True,
) -> PipelineConfig:
    try:
        return PipelineConfig(
            input_path=input_path,
            output_dir=output_dir,
            t_values=t_values,
            eps_yamabe=eps_yamabe,
            eps_omt=eps_omt,
            clip_radius=clip_radius,
            landmarks=landmarks,
            seed=seed,
            threads=threads,
            trace=trace,
            timings=timings,
        )
    except ValueError as e:
        console.print(str(e), style="error", markup=False)
        sys.exit(1)


@app.command(name="map")
def sphere_map(
    input_path: Path = Argument(..., help="Closed genus-0 triangle mesh (.obj or .off)"),
    t: Optional[List[float]] = T_OPTION,
    output_dir: Path = OUTPUT_DIR_OPTION,
    eps_yamabe: float = EPS_YAMABE_OPTION,
    eps_omt: float = EPS_OMT_OPTION,
    clip_radius: float = CLIP_RADIUS_OPTION,
    landmarks: Optional[Tuple[int, int]] = LANDMARKS_OPTION,
    seed: int = SEED_OPTION,
    threads: int = THREADS_OPTION,
    trace: bool = TRACE_OPTION,
    timings: bool = TIMINGS_OPTION,
    raw: bool = RAW_OPTION,
) -> None:
    """Map a mesh onto the unit sphere at each t, writing `<name>_t<t>.obj` and its report."""
    config = _config(
        input_path,
        output_dir,
        tuple(t) if t else DEFAULT_T_VALUES,
        eps_yamabe,
        eps_omt,
        clip_radius,
        landmarks,
        seed,
        threads,
        trace,
        timings,
    )
    with exit_on_error(), console.status("Mapping to the sphere..."):
        outputs = run_sphere_map(config)

    print_panel_or_raw(raw, [output.summary() for output in outputs], "Spherical Maps")


@app.command()
def conformal(
    input_path: Path = Argument(..., help="Closed genus-0 triangle mesh (.obj or .off)"),
    output_dir: Path = OUTPUT_DIR_OPTION,
    eps_yamabe: float = EPS_YAMABE_OPTION,
    landmarks: Optional[Tuple[int, int]] = LANDMARKS_OPTION,
    seed: int = SEED_OPTION,
    conformal_factor: bool = Option(
        False, help="Also write the conformal factor of each disk's Riemann map as CSV"
    ),
    trace: bool = TRACE_OPTION,
    timings: bool = TIMINGS_OPTION,
    raw: bool = RAW_OPTION,
) -> None:
    """Angle-preserving spherical map, written as `<name>_conformal.obj` with its report."""
    config = _config(
        input_path,
        output_dir,
        eps_yamabe=eps_yamabe,
        landmarks=landmarks,
        seed=seed,
        trace=trace,
        timings=timings,
    )
    with exit_on_error(), console.status("Computing the conformal map..."):
        ensure_output_dir(config.output_dir)
        mesh = load_mesh(config.input_path)
        embedding = conformal_stage(mesh, config, {})
        output = map_at_t(mesh, embedding, config, 0.0, suffix="conformal")
        if trace:
            output.trace_paths += write_conformal_traces(embedding, config)
        if conformal_factor and embedding.pipeline is not None:
            for k, riemann in enumerate(embedding.pipeline.riemann):
                path = config.output_dir / f"{config.name}_disk{k}_u.csv"
                write_vertex_values(riemann.conformal_factor, path, column="u")

    print_panel_or_raw(raw, output.summary(), "Conformal Map")


@app.command()
def area(
    input_path: Path = Argument(..., help="Closed genus-0 triangle mesh (.obj or .off)"),
    output_dir: Path = OUTPUT_DIR_OPTION,
    eps_yamabe: float = EPS_YAMABE_OPTION,
    eps_omt: float = EPS_OMT_OPTION,
    clip_radius: float = CLIP_RADIUS_OPTION,
    landmarks: Optional[Tuple[int, int]] = LANDMARKS_OPTION,
    seed: int = SEED_OPTION,
    trace: bool = TRACE_OPTION,
    timings: bool = TIMINGS_OPTION,
    raw: bool = RAW_OPTION,
) -> None:
    """Area-preserving spherical map, written as `<name>_area.obj` with its report."""
    config = _config(
        input_path,
        output_dir,
        (1.0,),
        eps_yamabe,
        eps_omt,
        clip_radius,
        landmarks,
        seed,
        trace=trace,
        timings=timings,
    )
    with exit_on_error(), console.status("Computing the area-preserving map..."):
        ensure_output_dir(config.output_dir)
        mesh = load_mesh(config.input_path)
        embedding = conformal_stage(mesh, config, {})
        output = map_at_t(mesh, embedding, config, 1.0, suffix="area")

    print_panel_or_raw(raw, output.summary(), "Area-Preserving Map")


@app.command()
def segment(
    input_path: Path = Argument(..., help="Closed genus-0 triangle mesh (.obj or .off)"),
    output_dir: Path = OUTPUT_DIR_OPTION,
    seed: int = SEED_OPTION,
    eigenfunction: bool = Option(False, help="Also write the eigenfunction values as CSV"),
    raw: bool = RAW_OPTION,
) -> None:
    """Cut a mesh into two disks along the zero level set of its first eigenfunction.

    Writes `<name>_disk0.obj`, `<name>_disk1.obj`, the cut loop `<name>_cut.obj` and the seam
    correspondence `<name>_seam.csv` used by `weld`.
    """
    name = input_path.stem
    with exit_on_error(), console.status("Segmenting..."):
        ensure_output_dir(output_dir)
        mesh = load_mesh(input_path)
        with stage("segment"):
            eigen = first_eigenfunction(mesh, seed=seed)
            loop = zero_level_loop(mesh, eigen)
            split = split_mesh(mesh, loop)
        write_mesh(split.disk0, output_dir / f"{name}_disk0.obj")
        write_mesh(split.disk1, output_dir / f"{name}_disk1.obj")
        write_polyline(loop.points, output_dir / f"{name}_cut.obj")
        WeldingSignature.from_split(split).write(output_dir / f"{name}_seam.csv")
        if eigenfunction:
            write_vertex_values(eigen.values, output_dir / f"{name}_eigenfunction.csv")

    data = {
        "eigenvalue": eigen.eigenvalue,
        "seam_vertices": len(split.seam),
        "cut_length": loop.length,
        "area_ratio": split.area_ratio,
        "disk0_faces": split.disk0.n_faces,
        "disk1_faces": split.disk1.n_faces,
    }
    print_panel_or_raw(raw, data, "Segmentation")


@app.command()
def weld(
    disk0: Path = Argument(..., help="First disk mesh, as written by `segment`"),
    disk1: Path = Argument(..., help="Second disk mesh, as written by `segment`"),
    seam: Path = Argument(..., help="Seam correspondence CSV, as written by `segment`"),
    output_dir: Path = OUTPUT_DIR_OPTION,
    eps_yamabe: float = EPS_YAMABE_OPTION,
    trace: bool = TRACE_OPTION,
    raw: bool = RAW_OPTION,
) -> None:
    """Map both disks onto the unit disk and weld them into one planar embedding.

    The vertex sent to infinity is written at the origin of `<name>_welded.obj` and named in
    `<name>_welded.infinity.json`.
    """
    name = disk0.stem.removesuffix("_disk0")
    with exit_on_error(), console.status("Welding..."):
        ensure_output_dir(output_dir)
        signature = WeldingSignature.load(seam)
        meshes = (load_mesh(disk0), load_mesh(disk1))
        with stage("riemann"):
            maps = [riemann_map(mesh, tol=eps_yamabe) for mesh in meshes]
        with stage("weld"):
            welded = zipper_weld(maps[0].embedding, maps[1].embedding, signature)
        positions = welded.positions.copy()
        positions[welded.infinity_vertex] = 0.0
        write_mesh(welded.mesh, output_dir / f"{name}_welded.obj", positions)
        sidecar = {
            "infinity_vertex": welded.infinity_vertex,
            "seam_error": float(welded.seam_error),
            "disk0_map": welded.disk1_map.tolist(),
            "disk1_map": welded.disk2_map.tolist(),
        }
        write_json(sidecar, output_dir / f"{name}_welded.infinity.json")
        if trace:
            for k, riemann in enumerate(maps):
                write_trace(riemann.annulus.flow.trace, output_dir / f"{name}_yamabe_disk{k}.csv")

    data = {
        "vertices": welded.mesh.n_vertices,
        "faces": welded.mesh.n_faces,
        "infinity_vertex": welded.infinity_vertex,
        "seam_error": float(welded.seam_error),
    }
    print_panel_or_raw(raw, data, "Welded Embedding")


@app.command()
def distortion(
    source: Path = Argument(..., help="Source mesh"),
    image: Path = Argument(..., help="Image mesh with the same connectivity"),
    output_dir: Path = OUTPUT_DIR_OPTION,
    csv: bool = Option(False, help="Also write the per-vertex and per-corner values as CSV"),
    raw: bool = RAW_OPTION,
) -> None:
    """Angle and area distortion of IMAGE relative to SOURCE, written as `<image>.report.json`."""
    with exit_on_error(), console.status("Measuring distortion..."):
        ensure_output_dir(output_dir)
        with stage("distortion"):
            report = distortion_report(load_mesh(source), load_mesh(image), model=source.stem)
        emit_report(report, output_dir / f"{image.stem}.report.json")
        if csv:
            emit_report(report, output_dir / f"{image.stem}.area.csv", fmt="csv", kind="area")
            emit_report(report, output_dir / f"{image.stem}.angle.csv", fmt="csv", kind="angle")

    data = {
        "faces": report.faces,
        "angle_stat": report.angle_stat,
        "area_stat": report.area_stat,
        "flipped_faces": len(report.jacobian.flipped_faces),
        "angle_log_ratio": report.angle.to_dict()["summary"],
        "area_log_ratio": report.area.to_dict()["summary"],
    }
    print_panel_or_raw(raw, data, "Distortion")


@app.command()
def info(
    input_path: Path = Argument(..., help="Triangle mesh (.obj or .off)"),
    raw: bool = RAW_OPTION,
) -> None:
    """Counts, topology and curvature summary of a mesh."""
    with exit_on_error():
        mesh = load_mesh(input_path)
        assert mesh.lengths is not None
        curvature = vertex_curvature(mesh, corner_angles(mesh, mesh.lengths))
        data = {
            "vertices": mesh.n_vertices,
            "edges": mesh.n_edges,
            "faces": mesh.n_faces,
            "euler_characteristic": mesh.euler_characteristic,
            "genus": mesh.genus(),
            "boundary_loops": len(mesh.boundary_loops()),
            "gauss_bonnet_residual": gauss_bonnet_residual(mesh, curvature),
            "total_area": total_area(mesh),
            "closed": mesh.is_closed,
        }

    print_panel_or_raw(raw, data, input_path.name)


@app.callback(invoke_without_command=True)
def main(
    version: Optional[bool] = Option(
        None,
        "--version",
        "-v",
        is_eager=True,
        help="Show the installed version",
    ),
    verbose: bool = Option(False, "--verbose", help="Log solver progress"),
) -> None:
    if version:
        echo(__version__)
        raise Exit()
    configure_logging(verbose)


if __name__ == "__main__":
    raise SystemExit(app())
