import json

import numpy as np
import pytest

from sphereflow.main import app
from sphereflow.mesh import load_mesh


@pytest.mark.parametrize(
    "args, vertices, faces",
    [
        (["icosphere", "--subdivisions", "1"], 42, 80),
        (["ellipsoid", "--subdivisions", "0", "--c", "3"], 12, 20),
        (["disk", "--rings", "2"], 19, 24),
        (["cylinder", "--rows", "2", "--segments", "8"], 24, 32),
    ],
)
def test_generate(args, vertices, faces, test_runner, tmp_path):
    output = tmp_path / "shape.obj"
    result = test_runner.invoke(
        app, ["generate", args[0], str(output), *args[1:], "--raw"], catch_exceptions=False
    )
    data = json.loads(result.stdout)
    assert data == {"path": str(output), "vertices": vertices, "faces": faces}
    mesh = load_mesh(output)
    assert mesh.n_vertices == vertices
    assert mesh.n_faces == faces


def test_generate_ellipsoid_axes(test_runner, tmp_path):
    output = tmp_path / "egg.off"
    args = ["generate", "ellipsoid", str(output), "--a", "0.5", "--c", "3", "--subdivisions", "1"]
    result = test_runner.invoke(app, args)
    assert result.exit_code == 0
    mesh = load_mesh(output)
    assert np.abs(mesh.positions).max(axis=0) == pytest.approx([0.5, 1.0, 3.0])


def test_generate_panel(test_runner, tmp_path):
    result = test_runner.invoke(app, ["generate", "disk", str(tmp_path / "disk.obj")])
    out = " ".join(result.stdout.split())
    assert "Disk" in out
    assert "faces: 2400" in out


def test_generate_rejects_bad_format(test_runner, tmp_path):
    result = test_runner.invoke(app, ["generate", "icosphere", str(tmp_path / "shape.stl")])
    assert result.exit_code == 3


def test_generate_rejects_zero_rings(test_runner, tmp_path):
    result = test_runner.invoke(app, ["generate", "disk", str(tmp_path / "d.obj"), "--rings", "0"])
    assert result.exit_code == 2


@pytest.mark.parametrize(
    "args",
    [
        ["ellipsoid", "--a", "0"],
        ["ellipsoid", "--c", "-1.5"],
        ["cylinder", "--height", "0"],
    ],
)
def test_generate_rejects_nonpositive_sizes(args, test_runner, tmp_path):
    output = tmp_path / "shape.obj"
    result = test_runner.invoke(app, ["generate", args[0], str(output), *args[1:]])
    assert result.exit_code == 2
    assert not output.exists()
