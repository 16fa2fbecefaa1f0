import math

import numpy as np
import pytest
import shapely
from scipy import integrate

from sphereflow import shapes
from sphereflow.distortion import distortion_report
from sphereflow.errors import DegenerateGeometryError
from sphereflow.omt import (
    MixtureDensity,
    PiecewiseConstantDensity,
    SiteSet,
    SphericalDensity,
    _quadratic_integrals,
    area_preserving_spherical_map,
    balanced_map,
    cell_measures,
    clip_polygon,
    interpolate_density,
    omt_energy,
    omt_gradient,
    omt_hessian,
    power_diagram,
    power_distance,
    power_heights,
    solve_omt,
)
from sphereflow.weld import conformal_spherical_map
from tests.utils import read_rows

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SQUARE_FACES = np.array([[0, 1, 2], [0, 2, 3]])
CLIP = 2.0


@pytest.fixture
def unit_square():
    return PiecewiseConstantDensity.from_triangles(SQUARE, SQUARE_FACES, np.ones(2))


@pytest.fixture
def random_sites():
    rng = np.random.default_rng(11)
    sites = 0.1 + 0.8 * rng.random((12, 2))
    gaps = np.linalg.norm(sites[:, None] - sites[None, :], axis=-1)
    closest = gaps[~np.eye(12, dtype=bool)].min()
    # power heights stay within 0.4 * closest² of each other, so every site keeps its cell
    jitter = 0.1 * closest**2 * rng.uniform(-1.0, 1.0, 12)
    heights = -0.5 * np.einsum("ij,ij->i", sites, sites) + jitter
    return sites, heights


def _evaluate(sites, heights, density):
    diagram = power_diagram(sites, power_heights(sites, heights), CLIP)
    return diagram, density.integrate(diagram)


def test_power_distance():
    assert power_distance(np.array([1.0, 1.0]), np.array([0.0, 0.0]), 0.5) == pytest.approx(2.5)


def test_site_set_defaults_to_voronoi():
    sites = SiteSet([[1.0, 2.0], [0.0, -1.0]], [1.0, 1.0])
    assert np.allclose(power_heights(sites.sites, sites.heights), 0.0)


def test_site_set_rejects_duplicates():
    with pytest.raises(DegenerateGeometryError):
        SiteSet([[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0])


def test_site_set_rejects_nonpositive_mass():
    with pytest.raises(ValueError):
        SiteSet([[0.0, 0.0], [1.0, 0.0]], [1.0, 0.0])


def test_single_site_owns_the_disk():
    diagram = power_diagram(np.array([[0.3, 0.1]]), np.zeros(1), CLIP)
    assert diagram.cell_areas()[0] == pytest.approx(clip_polygon(CLIP).area)
    assert len(diagram.edges) == 0


def test_power_diagram_partitions_the_disk(random_sites):
    sites, heights = random_sites
    diagram = power_diagram(sites, power_heights(sites, heights), CLIP)
    assert diagram.cell_areas().sum() == pytest.approx(clip_polygon(CLIP).area)
    assert len(diagram.empty_cells()) == 0


def test_power_diagram_reports_dominated_site():
    sites = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.3, 0.3]])
    diagram = power_diagram(sites, np.array([0.0, 0.0, 0.0, 1.0]), CLIP)
    assert diagram.empty_cells().tolist() == [3]
    assert diagram.cell_areas().sum() == pytest.approx(clip_polygon(CLIP).area)


def test_power_diagram_owner(random_sites):
    sites, heights = random_sites
    diagram = power_diagram(sites, power_heights(sites, heights), CLIP)
    rng = np.random.default_rng(5)
    samples = 3.0 * rng.random((500, 2)) - 1.5
    inside = np.array(
        [shapely.contains_xy(cell, samples[:, 0], samples[:, 1]) for cell in diagram.cells]
    )
    unique = inside.sum(axis=0) == 1
    assert unique.sum() > 400
    assert np.array_equal(diagram.owner(samples[unique]), inside[:, unique].argmax(axis=0))


def test_power_diagram_rejects_duplicates():
    with pytest.raises(DegenerateGeometryError):
        power_diagram(np.array([[0.0, 0.0], [0.0, 0.0]]), np.zeros(2), CLIP)


def test_power_diagram_write_obj(random_sites, tmp_path):
    sites, heights = random_sites
    diagram = power_diagram(sites, power_heights(sites, heights), CLIP)
    rows = read_rows(diagram.write_obj(tmp_path / "cells.obj"))
    assert len([row for row in rows if row.startswith("f ")]) >= len(sites)


def test_equal_masses_keep_voronoi_cells(unit_square):
    sites = SiteSet([[0.25, 0.5], [0.75, 0.5]], [0.5, 0.5])
    result = solve_omt(sites, unit_square, CLIP)
    assert result.iterations == 0
    assert np.allclose(result.power_heights, 0.0)
    assert np.allclose(result.integrals.mass, [0.5, 0.5])


def test_unequal_masses_shift_the_boundary(unit_square):
    sites = SiteSet([[0.25, 0.5], [0.75, 0.5]], [0.25, 0.75])
    result = solve_omt(sites, unit_square, CLIP, tol=1e-10)
    assert result.heights[0] - result.heights[1] == pytest.approx(0.125, abs=1e-8)
    assert np.allclose(result.integrals.mass, [0.25, 0.75])
    assert np.allclose(result.centroids(), [[0.125, 0.5], [0.625, 0.5]])


def test_hessian_two_sites(unit_square):
    sites = np.array([[0.25, 0.5], [0.75, 0.5]])
    diagram, integrals = _evaluate(sites, -0.5 * (sites**2).sum(axis=1), unit_square)
    hessian = omt_hessian(diagram, integrals).toarray()
    assert hessian[0, 1] == pytest.approx(-2.0)
    assert np.allclose(hessian.sum(axis=1), 0.0)


def test_energy_gradient_matches_finite_differences(unit_square, random_sites):
    sites, heights = random_sites
    masses = np.full(len(sites), 1.0 / len(sites))
    _, integrals = _evaluate(sites, heights, unit_square)
    gradient = omt_gradient(SiteSet(sites, masses, heights), integrals)
    eps = 1e-6
    for i in range(0, len(sites), 3):
        step = np.zeros(len(sites))
        step[i] = eps
        energies = []
        for shifted in (heights + step, heights - step):
            _, shifted_integrals = _evaluate(sites, shifted, unit_square)
            energies.append(omt_energy(SiteSet(sites, masses, shifted), shifted_integrals))
        assert (energies[0] - energies[1]) / (2 * eps) == pytest.approx(gradient[i], abs=1e-6)


def test_hessian_matches_finite_differences(unit_square, random_sites):
    sites, heights = random_sites
    diagram, integrals = _evaluate(sites, heights, unit_square)
    hessian = omt_hessian(diagram, integrals).toarray()
    eps = 1e-6
    for j in range(0, len(sites), 4):
        step = np.zeros(len(sites))
        step[j] = eps
        forward = _evaluate(sites, heights + step, unit_square)[1].mass
        backward = _evaluate(sites, heights - step, unit_square)[1].mass
        assert np.allclose((forward - backward) / (2 * eps), hessian[:, j], atol=1e-4)


def test_solve_omt_random_masses(unit_square, random_sites):
    sites, _ = random_sites
    masses = 0.5 + np.random.default_rng(2).random(len(sites))
    masses /= masses.sum()
    result = solve_omt(SiteSet(sites, masses), unit_square, CLIP, tol=1e-8)
    assert result.residual < 1e-8
    assert np.allclose(result.integrals.mass, masses, atol=1e-8 * masses.max())
    assert abs(result.power_heights.mean()) < 1e-12
    assert [row["iteration"] for row in result.trace] == list(range(result.iterations + 1))


def test_solve_omt_mass_mismatch(unit_square):
    with pytest.raises(ValueError):
        solve_omt(SiteSet([[0.25, 0.5], [0.75, 0.5]], [0.5, 0.6]), unit_square, CLIP)


def test_quadratic_integrals():
    inverse, inverse_sq, length = _quadratic_integrals(
        np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]])
    )
    assert inverse[0] == pytest.approx(math.pi / 4)
    assert 4.0 * length[0] * inverse_sq[0] == pytest.approx(1.0 + math.pi / 2)


def test_spherical_density_square_integrals():
    density = SphericalDensity()
    mass, moment = density._polygon_integrals(np.array([shapely.box(0.0, 0.0, 1.0, 1.0)]))
    expected = integrate.dblquad(
        lambda y, x: 4.0 / (1 + x * x + y * y) ** 2, 0, 1, 0, 1, epsabs=1e-12
    )[0]
    expected_x = integrate.dblquad(
        lambda y, x: 4.0 * x / (1 + x * x + y * y) ** 2, 0, 1, 0, 1, epsabs=1e-12
    )[0]
    assert mass[0] == pytest.approx(expected, rel=1e-9)
    assert moment[0, 0] == pytest.approx(expected_x, rel=1e-9)
    assert moment[0, 1] == pytest.approx(expected_x, rel=1e-9)


def test_spherical_density_total_mass():
    assert SphericalDensity(1e3).total_mass() == pytest.approx(4.0 * math.pi, rel=2e-6)
    assert SphericalDensity(1e3, normalize=True).total_mass() == pytest.approx(
        4.0 * math.pi, rel=1e-12
    )
    assert SphericalDensity(1.0).total_mass() == pytest.approx(2.0 * math.pi, rel=1e-3)


def test_spherical_density_cells_sum_to_total(random_sites):
    sites, heights = random_sites
    density = SphericalDensity(CLIP)
    diagram = power_diagram(sites, power_heights(sites, heights), CLIP)
    assert density.integrate(diagram).mass.sum() == pytest.approx(density.total_mass())


def test_cell_measures(unit_square, random_sites):
    sites, heights = random_sites
    diagram, integrals = _evaluate(sites, heights, unit_square)
    measured = cell_measures(diagram, unit_square)
    assert np.allclose(measured.mass, integrals.mass)
    assert len(measured.edge) == len(diagram.edges)
    assert measured.mass.sum() == pytest.approx(1.0)


def test_piecewise_constant_density():
    density = PiecewiseConstantDensity.from_triangles(SQUARE, SQUARE_FACES, np.array([1.0, 3.0]))
    values = density(np.array([[0.9, 0.1], [0.1, 0.9], [2.0, 2.0]]))
    assert np.allclose(values, [1.0, 3.0, 0.0])
    assert density.total_mass() == pytest.approx(2.0)


def test_pushforward_exterior_face():
    planar = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    faces = np.array([[0, 1, 2], [1, 3, 2]])
    density = PiecewiseConstantDensity.pushforward(
        planar, faces, np.array([1.0, 2.0]), CLIP, exterior_face=1
    )
    assert density.total_mass() == pytest.approx(3.0)
    assert density(np.array([[1.5, 0.0]]))[0] > 0


def test_pushforward_rejects_degenerate_faces():
    planar = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateGeometryError):
        PiecewiseConstantDensity.pushforward(planar, np.array([[0, 1, 2]]), np.ones(1), CLIP)


def test_interpolate_density():
    spherical = SphericalDensity(CLIP, normalize=True)
    domain = clip_polygon(CLIP)
    flat = PiecewiseConstantDensity([domain], [4.0 * math.pi / domain.area])
    points = np.array([[0.0, 0.0], [1.0, 0.5]])
    assert np.allclose(interpolate_density(0.0, flat, spherical)(points), spherical(points))
    assert np.allclose(interpolate_density(1.0, flat, spherical)(points), flat(points))
    half = interpolate_density(0.5, flat, spherical)
    assert np.allclose(half(points), 0.5 * (flat(points) + spherical(points)))
    assert half.total_mass() == pytest.approx(4.0 * math.pi)


def test_interpolate_density_mass_mismatch(unit_square):
    with pytest.raises(ValueError):
        interpolate_density(0.5, unit_square, SphericalDensity(CLIP, normalize=True))


def test_mixture_rejects_t_outside_range(unit_square):
    with pytest.raises(ValueError):
        MixtureDensity(unit_square, unit_square, 1.5)


def test_balanced_map_t0_is_conformal(ellipsoid, conformal_ellipsoid):
    result = balanced_map(ellipsoid, conformal_ellipsoid, 0.0)
    assert np.array_equal(result.embedding.positions, conformal_ellipsoid.positions)
    assert result.transport is None


def test_balanced_map_rejects_t(ellipsoid, conformal_ellipsoid):
    with pytest.raises(ValueError):
        balanced_map(ellipsoid, conformal_ellipsoid, -0.1)


def test_area_preserving_map(ellipsoid, conformal_ellipsoid):
    result = area_preserving_spherical_map(ellipsoid, conformal_ellipsoid)
    assert result.transport.residual < 1e-6
    assert result.embedding.norm_error() < 1e-12
    conformal = distortion_report(ellipsoid, conformal_ellipsoid.positions)
    area = distortion_report(ellipsoid, result.embedding.positions)
    assert area.area_stat < conformal.area_stat
    assert area.angle_stat > conformal.angle_stat
    assert area.area.values.std() < conformal.area.values.std()


@pytest.fixture(scope="module")
def sweep(ellipsoid, conformal_ellipsoid):
    return [
        distortion_report(
            ellipsoid, balanced_map(ellipsoid, conformal_ellipsoid, t).embedding.positions
        )
        for t in (0.0, 0.25, 0.5, 0.75, 1.0)
    ]


def test_balanced_map_trades_angle_for_area(sweep):
    angle = [report.angle_stat for report in sweep]
    area = [report.area_stat for report in sweep]
    assert angle[0] < angle[-1]
    assert area[-1] < area[0]
    for k in range(len(sweep) - 1):
        assert angle[k + 1] >= 0.99 * angle[k]
        assert area[k + 1] <= 1.01 * area[k]


@pytest.mark.slow
def test_balanced_map_endpoints():
    mesh = shapes.ellipsoid(1.0, 1.0, 2.0, 3)
    conformal = conformal_spherical_map(mesh)
    first = distortion_report(mesh, balanced_map(mesh, conformal, 0.0).embedding.positions)
    last = distortion_report(mesh, balanced_map(mesh, conformal, 1.0).embedding.positions)
    assert first.angle_stat == pytest.approx(2.0, abs=0.05)
    assert last.area_stat == pytest.approx(2.0, abs=0.05)


def test_solve_omt_heights_unique_up_to_a_constant(unit_square, random_sites):
    sites, heights = random_sites
    masses = 0.5 + np.random.default_rng(8).random(len(sites))
    masses /= masses.sum()
    first = solve_omt(SiteSet(sites, masses), unit_square, CLIP, tol=1e-10)
    second = solve_omt(SiteSet(sites, masses, heights + 0.3), unit_square, CLIP, tol=1e-10)
    shift = first.heights - second.heights
    assert np.abs(shift - shift.mean()).max() < 1e-6


def test_balanced_map_landmarks(ellipsoid, conformal_ellipsoid):
    result = balanced_map(ellipsoid, conformal_ellipsoid, 1.0, landmarks=(0, 10))
    assert np.allclose(result.embedding.positions[0], [0.0, 0.0, 1.0])
    assert abs(result.embedding.positions[10, 1]) < 1e-9
    assert result.pole_face is not None
