import pytest
from typer.testing import CliRunner

from sphereflow import shapes
from sphereflow.mesh import write_mesh
from sphereflow.weld import conformal_spherical_map
from tests.utils import torus


@pytest.fixture
def test_runner():
    return CliRunner()


@pytest.fixture(scope="session")
def icosphere():
    return shapes.icosphere(2)


@pytest.fixture(scope="session")
def ellipsoid():
    return shapes.ellipsoid(1.0, 1.0, 2.0, 2)


@pytest.fixture(scope="session")
def conformal_icosphere(icosphere):
    return conformal_spherical_map(icosphere)


@pytest.fixture(scope="session")
def conformal_ellipsoid(ellipsoid):
    return conformal_spherical_map(ellipsoid)


@pytest.fixture
def mesh_path(tmp_path):
    def writer(mesh, name="mesh.obj"):
        return write_mesh(mesh, tmp_path / name)

    return writer


@pytest.fixture
def torus_path(mesh_path):
    return mesh_path(torus(), "torus.obj")
