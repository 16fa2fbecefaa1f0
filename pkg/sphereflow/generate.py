from __future__ import annotations

from pathlib import Path

from rich.traceback import install
from typer import Argument, Option, Typer

from sphereflow import shapes
from sphereflow._config import RAW_OPTION, console, positive
from sphereflow._helpers import exit_on_error, print_panel_or_raw
from sphereflow.mesh import HalfedgeMesh, write_mesh

install()
app = Typer()

OUTPUT_ARGUMENT = Argument(..., help="Where to write the mesh (.obj or .off)")


def _write(mesh: HalfedgeMesh, output: Path, raw: bool, title: str) -> None:
    with exit_on_error(), console.status(f"Writing {output.name}..."):
        write_mesh(mesh, output)

    data = {"path": str(output), "vertices": mesh.n_vertices, "faces": mesh.n_faces}
    print_panel_or_raw(raw, data, title)


@app.command()
def icosphere(
    output: Path = OUTPUT_ARGUMENT,
    subdivisions: int = Option(3, min=0, max=8, help="Number of 1-to-4 subdivisions"),
    raw: bool = RAW_OPTION,
) -> None:
    """Unit sphere with 20·4^subdivisions faces."""
    _write(shapes.icosphere(subdivisions), output, raw, "Icosphere")


@app.command()
def ellipsoid(
    output: Path = OUTPUT_ARGUMENT,
    a: float = Option(1.0, callback=positive, help="Semi-axis along x"),
    b: float = Option(1.0, callback=positive, help="Semi-axis along y"),
    c: float = Option(2.0, callback=positive, help="Semi-axis along z"),
    subdivisions: int = Option(3, min=0, max=8, help="Number of 1-to-4 subdivisions"),
    raw: bool = RAW_OPTION,
) -> None:
    """Icosphere scaled to the given semi-axes."""
    _write(shapes.ellipsoid(a, b, c, subdivisions), output, raw, "Ellipsoid")


@app.command()
def disk(
    output: Path = OUTPUT_ARGUMENT,
    rings: int = Option(20, min=1, help="Number of concentric rings"),
    raw: bool = RAW_OPTION,
) -> None:
    """Planar unit disk with 6·rings² faces."""
    _write(shapes.flat_disk(rings), output, raw, "Disk")


@app.command()
def cylinder(
    output: Path = OUTPUT_ARGUMENT,
    height: float = Option(1.0, callback=positive, help="Height of the cylinder"),
    rows: int = Option(16, min=1, help="Number of rows along the axis"),
    segments: int = Option(64, min=3, help="Number of segments around the axis"),
    raw: bool = RAW_OPTION,
) -> None:
    """Open cylinder of circumference 2π, an intrinsically flat annulus."""
    _write(shapes.flat_cylinder(height, rows, segments), output, raw, "Cylinder")


if __name__ == "__main__":
    raise SystemExit(app())
