"""Semi-discrete optimal transport on the plane with power diagrams, and the area-preserving and
balanced spherical maps built on it.

Heights follow the upper-envelope convention u_h(q) = max_i <q, y_i> + h_i. The matching power
heights, Pow(q, y_i) = |q - y_i|² + w_i, are w_i = -|y_i|² - 2 h_i.
"""

from __future__ import annotations

import abc
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple

import numpy as np
import shapely
from numpy.typing import NDArray
from scipy import sparse
from scipy.spatial import ConvexHull, QhullError

from sphereflow._config import DEFAULT_CLIP_RADIUS, DEFAULT_EPS_OMT
from sphereflow.errors import ConvergenceError, DegenerateGeometryError, MeshIOError
from sphereflow.flow import solve_pinned
from sphereflow.mesh import (
    FloatArray,
    HalfedgeMesh,
    IntArray,
    positions_face_areas,
    total_area,
    vertex_area_weights,
)
from sphereflow.weld import (
    SphericalEmbedding,
    landmark_rotation,
    plane_to_sphere,
    sphere_to_plane,
)

logger = logging.getLogger(__name__)

N_DUMMIES = 8
CLIP_SEGMENTS = 64
MIN_STEP = 1e-10
POLE_CLEARANCE = 1e-3
MASS_TOLERANCE = 1e-9


def power_distance(q: FloatArray, p: FloatArray, h: float | FloatArray) -> FloatArray:
    """|p - q|² + h."""
    diff = np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    return np.sum(diff * diff, axis=-1) + h


def power_heights(sites: FloatArray, heights: FloatArray) -> FloatArray:
    """Power heights of the diagram with envelope heights `heights`."""
    return -np.einsum("ij,ij->i", sites, sites) - 2.0 * np.asarray(heights)


def clip_polygon(radius: float) -> shapely.Polygon:
    return shapely.Point(0.0, 0.0).buffer(radius, quad_segs=CLIP_SEGMENTS)


@dataclass
class SiteSet:
    """Dirac sites with target masses; `heights` are envelope heights."""

    sites: FloatArray
    masses: FloatArray
    heights: Optional[FloatArray] = None

    def __post_init__(self) -> None:
        self.sites = np.asarray(self.sites, dtype=np.float64).reshape(-1, 2)
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if len(self.masses) != len(self.sites):
            raise ValueError("one target mass per site is required")
        if (self.masses <= 0).any():
            raise ValueError("target masses must be positive")
        if len(np.unique(self.sites, axis=0)) != len(self.sites):
            raise DegenerateGeometryError("duplicate sites")
        if self.heights is None:
            # zero power heights: the plain Voronoi diagram, where every cell is nonempty
            self.heights = -0.5 * np.einsum("ij,ij->i", self.sites, self.sites)
        self.heights = np.asarray(self.heights, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.sites)


@dataclass
class PowerDiagram:
    """Power cells of `sites` clipped to the disk of radius `clip_radius`.

    `edges[m]` is the site pair sharing the dual segment `segments[m]` (clipped to the disk).
    """

    sites: FloatArray
    power_heights: FloatArray
    clip_radius: float
    cells: NDArray[np.object_]
    edges: IntArray
    segments: FloatArray
    domain: shapely.Polygon

    def __len__(self) -> int:
        return len(self.sites)

    def cell_areas(self) -> FloatArray:
        return shapely.area(self.cells)

    def empty_cells(self) -> IntArray:
        return np.flatnonzero(self.cell_areas() <= 0.0)

    def owner(self, points: FloatArray) -> IntArray:
        """Brute-force minimizer of the power distance for each point."""
        points = np.atleast_2d(points)
        owners = np.empty(len(points), dtype=np.int64)
        for start in range(0, len(points), 1024):
            chunk = points[start : start + 1024]
            distances = power_distance(chunk[:, None, :], self.sites[None, :, :], 0.0)
            owners[start : start + 1024] = np.argmin(distances + self.power_heights, axis=1)
        return owners

    def write_obj(self, path: Path) -> Path:
        """Polygon soup of the nonempty cells, z = 0."""
        path = Path(path)
        lines, offset = [], 1
        for cell in self.cells:
            if shapely.is_empty(cell):
                continue
            for polygon in getattr(cell, "geoms", [cell]):
                ring = np.asarray(polygon.exterior.coords)[:-1]
                lines += [f"v {x:.17g} {y:.17g} 0" for x, y in ring]
                lines.append("f " + " ".join(str(offset + i) for i in range(len(ring))))
                offset += len(ring)
        try:
            path.write_text("\n".join(lines) + "\n")
        except OSError as e:
            raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
        return path


def _dummy_sites(
    sites: FloatArray, heights: FloatArray, clip_radius: float
) -> Tuple[FloatArray, FloatArray]:
    # far sites whose cells never reach the clip disk but bound every real cell
    reach = max(clip_radius, float(np.abs(sites).max()))
    radius = 3.0 * reach
    angles = 2.0 * math.pi * np.arange(N_DUMMIES) / N_DUMMIES
    dummies = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    norms = np.linalg.norm(sites, axis=1)
    bound = float(((clip_radius + norms) ** 2 + heights).min())
    dummy_height = bound + 1.0 - (radius - clip_radius) ** 2
    return dummies, np.full(N_DUMMIES, dummy_height)


def _clip_segments(segments: FloatArray, radius: float) -> FloatArray:
    """Clip segments (m, 2, 2) to the disk |x| <= radius; outside pieces collapse to a point."""
    a = segments[:, 0]
    d = segments[:, 1] - a
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", a, d)
    qc = np.einsum("ij,ij->i", a, a) - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = np.where(qa > 0, (-qb - root) / (2.0 * qa), 0.0)
        t1 = np.where(qa > 0, (-qb + root) / (2.0 * qa), 1.0)
    t0 = np.clip(t0, 0.0, 1.0)
    t1 = np.clip(t1, 0.0, 1.0)
    outside = (disc <= 0) | (t1 <= t0)
    t1 = np.where(outside, t0, t1)
    return np.stack([a + t0[:, None] * d, a + t1[:, None] * d], axis=1)


def power_diagram(
    sites: FloatArray, heights: FloatArray, clip_radius: float = DEFAULT_CLIP_RADIUS
) -> PowerDiagram:
    """Power diagram for power `heights` from the lower convex hull of the lifted sites.

    Each lower facet through lifted points (y, |y|² + w) yields the power vertex shared by its
    three cells: half the gradient of the facet plane.
    """
    sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    heights = np.asarray(heights, dtype=np.float64)
    k = len(sites)
    if len(np.unique(sites, axis=0)) != k:
        raise DegenerateGeometryError("duplicate sites")
    if not np.isfinite(heights).all() or not np.isfinite(sites).all():
        raise DegenerateGeometryError("sites and heights must be finite")
    domain = clip_polygon(clip_radius)
    if k == 1:
        cells = np.array([domain], dtype=object)
        return PowerDiagram(
            sites,
            heights,
            clip_radius,
            cells,
            np.zeros((0, 2), np.int64),
            np.zeros((0, 2, 2)),
            domain,
        )

    dummies, dummy_heights = _dummy_sites(sites, heights, clip_radius)
    points = np.vstack([sites, dummies])
    weights = np.concatenate([heights, dummy_heights])
    lifted = np.column_stack([points, np.einsum("ij,ij->i", points, points) + weights])
    try:
        hull = ConvexHull(lifted)
    except QhullError as e:
        raise DegenerateGeometryError(f"power diagram construction failed: {e}") from e

    lower = np.flatnonzero(hull.equations[:, 2] < 0)
    normals = hull.equations[lower]
    vertices = np.full((len(hull.simplices), 2), np.nan)
    vertices[lower] = -0.5 * normals[:, :2] / normals[:, 2:3]

    simplices = hull.simplices[lower]
    owners = simplices.reshape(-1)
    corner_facets = np.repeat(lower, 3)
    real = owners < k
    order = np.lexsort((corner_facets[real], owners[real]))
    owners, corner_facets = owners[real][order], corner_facets[real][order]
    bounds = np.searchsorted(owners, np.arange(k + 1))
    cells = np.empty(k, dtype=object)
    for i in range(k):
        ring = vertices[corner_facets[bounds[i] : bounds[i + 1]]]
        if len(ring) < 3:
            cells[i] = shapely.Polygon()
            continue
        center = ring.mean(axis=0)
        ring = ring[np.argsort(np.arctan2(ring[:, 1] - center[1], ring[:, 0] - center[0]))]
        cells[i] = shapely.Polygon(ring)
    cells = shapely.intersection(cells, domain)

    pairs, segments = [], []
    is_lower = np.zeros(len(hull.simplices), dtype=bool)
    is_lower[lower] = True
    for f in lower:
        for slot, g in enumerate(hull.neighbors[f]):
            if g <= f or not is_lower[g]:
                continue
            shared = np.delete(hull.simplices[f], slot)
            if (shared >= k).any():
                continue
            pairs.append(np.sort(shared))
            segments.append((vertices[f], vertices[g]))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    raw_segments = np.array(segments, dtype=np.float64).reshape(-1, 2, 2)
    segment_array = _clip_segments(raw_segments, clip_radius)
    return PowerDiagram(sites, heights, clip_radius, cells, edges, segment_array, domain)


@dataclass
class CellIntegrals:
    """Density integrals over the cells (`mass`, `moment`) and the dual segments (`edge`)."""

    mass: FloatArray
    moment: FloatArray
    edge: FloatArray

    def __add__(self, other: CellIntegrals) -> CellIntegrals:
        return CellIntegrals(
            self.mass + other.mass, self.moment + other.moment, self.edge + other.edge
        )

    def scaled(self, factor: float) -> CellIntegrals:
        return CellIntegrals(factor * self.mass, factor * self.moment, factor * self.edge)

    def centroids(self) -> FloatArray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.moment / self.mass[:, None]


class SourceDensity(abc.ABC):
    @abc.abstractmethod
    def __call__(self, points: FloatArray) -> FloatArray:
        ...

    @abc.abstractmethod
    def total_mass(self) -> float:
        ...

    @abc.abstractmethod
    def integrate(self, diagram: PowerDiagram) -> CellIntegrals:
        ...


def _quadratic_integrals(a: FloatArray, b: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """For Q(t) = 1 + |a + t(b - a)|², return (∫₀¹ 1/Q, ∫₀¹ 1/Q², |b - a|)."""
    d = b - a
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", a, d)
    qc = 1.0 + np.einsum("ij,ij->i", a, a)
    cross = a[:, 0] * d[:, 1] - a[:, 1] * d[:, 0]
    delta = 4.0 * (qa + cross * cross)
    length = np.sqrt(qa)
    inverse = np.zeros(len(a))
    inverse_sq = np.zeros(len(a))
    ok = qa > 0
    root = np.sqrt(delta[ok])
    u1 = (2.0 * qa[ok] + qb[ok]) / root
    u0 = qb[ok] / root
    inverse[ok] = 2.0 / root * np.arctan2(u1 - u0, 1.0 + u0 * u1)
    end = qa[ok] + qb[ok] + qc[ok]
    inverse_sq[ok] = (
        (2.0 * qa[ok] + qb[ok]) / (delta[ok] * end)
        - qb[ok] / (delta[ok] * qc[ok])
        + 2.0 * qa[ok] / delta[ok] * inverse[ok]
    )
    return inverse, inverse_sq, length


@dataclass
class SphericalDensity(SourceDensity):
    """4 / (1 + |x|²)², the area element of the unit sphere under stereographic projection.

    With `normalize` the density is rescaled to carry exactly 4π inside the clip polygon.
    """

    clip_radius: float = DEFAULT_CLIP_RADIUS
    normalize: bool = False
    scale: float = field(init=False, default=1.0)

    def __post_init__(self) -> None:
        if self.normalize:
            self.scale = 4.0 * math.pi / self.total_mass()

    def __call__(self, points: FloatArray) -> FloatArray:
        points = np.atleast_2d(points)
        r2 = np.einsum("ij,ij->i", points, points)
        return self.scale * 4.0 / (1.0 + r2) ** 2

    def total_mass(self) -> float:
        return float(self._polygon_masses(np.array([clip_polygon(self.clip_radius)]))[0])

    def _polygon_integrals(self, polygons: NDArray[np.object_]) -> Tuple[FloatArray, FloatArray]:
        # Green's theorem: 4/(1+r²)² dA = d[2(x dy - y dx)/(1+r²)], x ρ dA = d[-2 dy/(1+r²)]
        # and y ρ dA = d[2 dx/(1+r²)]; each edge reduces to the same ∫ dt/Q(t)
        n = len(polygons)
        rings = shapely.get_exterior_ring(polygons)
        coords, index = shapely.get_coordinates(rings, return_index=True)
        mass = np.zeros(n)
        moment = np.zeros((n, 2))
        if len(coords) < 2:
            return mass, moment
        same = index[:-1] == index[1:]
        a, b, owner = coords[:-1][same], coords[1:][same], index[:-1][same]
        inverse, _, _ = _quadratic_integrals(a, b)
        d = b - a
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        signed = np.bincount(owner, weights=0.5 * cross, minlength=n)
        sign = np.where(signed < 0, -1.0, 1.0)
        mass = sign * np.bincount(owner, weights=2.0 * cross * inverse, minlength=n)
        moment[:, 0] = sign * np.bincount(owner, weights=-2.0 * d[:, 1] * inverse, minlength=n)
        moment[:, 1] = sign * np.bincount(owner, weights=2.0 * d[:, 0] * inverse, minlength=n)
        return self.scale * mass, self.scale * moment

    def _polygon_masses(self, polygons: NDArray[np.object_]) -> FloatArray:
        return self._polygon_integrals(polygons)[0]

    def integrate(self, diagram: PowerDiagram) -> CellIntegrals:
        mass, moment = self._polygon_integrals(diagram.cells)
        if len(diagram.edges):
            a, b = diagram.segments[:, 0], diagram.segments[:, 1]
            _, inverse_sq, length = _quadratic_integrals(a, b)
            edge = self.scale * 4.0 * length * inverse_sq
        else:
            edge = np.zeros(0)
        return CellIntegrals(mass, moment, edge)


class PiecewiseConstantDensity(SourceDensity):
    """Constant value on each of a set of planar polygons (triangles, plus an optional
    exterior region with a triangular hole)."""

    def __init__(self, polygons: Sequence[shapely.Geometry], values: FloatArray) -> None:
        self.polygons = np.array(list(polygons), dtype=object)
        self.values = np.asarray(values, dtype=np.float64)
        if len(self.polygons) != len(self.values):
            raise ValueError("one value per polygon is required")
        if (self.values < 0).any():
            raise ValueError("density values must be nonnegative")
        self.tree = shapely.STRtree(self.polygons)

    @classmethod
    def from_triangles(
        cls, vertices: FloatArray, faces: IntArray, values: FloatArray
    ) -> PiecewiseConstantDensity:
        return cls(shapely.polygons(np.asarray(vertices)[np.asarray(faces)]), values)

    @classmethod
    def pushforward(
        cls,
        planar: FloatArray,
        faces: IntArray,
        face_masses: FloatArray,
        clip_radius: float = DEFAULT_CLIP_RADIUS,
        exterior_face: Optional[int] = None,
    ) -> PiecewiseConstantDensity:
        """Spread `face_masses[f]` uniformly over the planar image of face f.

        `exterior_face` is the face whose spherical image contains the pole; its planar image
        is the clip disk outside the triangle of its vertices.
        """
        triangles = shapely.polygons(np.asarray(planar)[np.asarray(faces)])
        areas = shapely.area(triangles)
        polygons = list(triangles)
        if exterior_face is not None:
            polygons[exterior_face] = clip_polygon(clip_radius).difference(
                triangles[exterior_face]
            )
            areas[exterior_face] = polygons[exterior_face].area
        degenerate = np.flatnonzero(areas <= 0.0)
        if degenerate.size:
            raise DegenerateGeometryError("planar image has zero-area faces", faces=degenerate)
        return cls(polygons, np.asarray(face_masses, dtype=np.float64) / areas)

    def __call__(self, points: FloatArray) -> FloatArray:
        points = shapely.points(np.atleast_2d(points))
        hits = self.tree.query(points, predicate="within")
        out = np.zeros(len(points))
        out[hits[0]] = self.values[hits[1]]
        return out

    def total_mass(self) -> float:
        return math.fsum((self.values * shapely.area(self.polygons)).tolist())

    def integrate(self, diagram: PowerDiagram) -> CellIntegrals:
        n = len(diagram)
        cells, polygons = self.tree.query(diagram.cells, predicate="intersects")
        pieces = shapely.intersection(diagram.cells[cells], self.polygons[polygons])
        area = shapely.area(pieces)
        keep = area > 0
        cells, polygons, pieces, area = cells[keep], polygons[keep], pieces[keep], area[keep]
        piece_mass = area * self.values[polygons]
        centers = shapely.get_coordinates(shapely.centroid(pieces))
        mass = np.bincount(cells, weights=piece_mass, minlength=n)
        moment = np.column_stack(
            [np.bincount(cells, weights=piece_mass * centers[:, k], minlength=n) for k in range(2)]
        )

        edge = np.zeros(len(diagram.edges))
        lengths = np.linalg.norm(diagram.segments[:, 1] - diagram.segments[:, 0], axis=1)
        live = np.flatnonzero(lengths > 0)
        if live.size:
            lines = shapely.linestrings(diagram.segments[live])
            segs, polys = self.tree.query(lines, predicate="intersects")
            crossed = shapely.length(shapely.intersection(lines[segs], self.polygons[polys]))
            weights = crossed * self.values[polys]
            edge[live] = np.bincount(segs, weights=weights, minlength=live.size)
        return CellIntegrals(mass, moment, edge)


class MixtureDensity(SourceDensity):
    """(1 - t)·first + t·second."""

    def __init__(self, first: SourceDensity, second: SourceDensity, t: float) -> None:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must be in [0, 1], got {t}")
        self.first, self.second, self.t = first, second, float(t)

    def __call__(self, points: FloatArray) -> FloatArray:
        return (1.0 - self.t) * self.first(points) + self.t * self.second(points)

    def total_mass(self) -> float:
        return (1.0 - self.t) * self.first.total_mass() + self.t * self.second.total_mass()

    def integrate(self, diagram: PowerDiagram) -> CellIntegrals:
        if self.t == 0.0:
            return self.first.integrate(diagram)
        if self.t == 1.0:
            return self.second.integrate(diagram)
        return self.first.integrate(diagram).scaled(1.0 - self.t) + self.second.integrate(
            diagram
        ).scaled(self.t)


def interpolate_density(
    t: float, pushforward: SourceDensity, spherical: SourceDensity, tol: float = 1e-6
) -> SourceDensity:
    """(1 - t)·spherical + t·pushforward; both must carry the same total mass."""
    first, second = spherical.total_mass(), pushforward.total_mass()
    if abs(first - second) > tol * max(first, second):
        raise ValueError(f"densities carry different masses ({first:.9g} vs {second:.9g})")
    return MixtureDensity(spherical, pushforward, t)


def cell_measures(diagram: PowerDiagram, density: SourceDensity) -> CellIntegrals:
    return density.integrate(diagram)


def omt_energy(sites: SiteSet, integrals: CellIntegrals) -> float:
    """∫ u_h ρ - Σ ν_i h_i, with u_h = <q, y_i> + h_i on cell i."""
    assert sites.heights is not None
    per_cell = np.einsum("ij,ij->i", integrals.moment, sites.sites) + sites.heights * integrals.mass
    return math.fsum((per_cell - sites.masses * sites.heights).tolist())


def omt_gradient(sites: SiteSet, integrals: CellIntegrals) -> FloatArray:
    return integrals.mass - sites.masses


def omt_hessian(diagram: PowerDiagram, integrals: CellIntegrals) -> sparse.csr_matrix:
    """Off-diagonal -∫_e ρ / |y_i - y_j| over the shared segment e; zero row sums."""
    n = len(diagram)
    i, j = diagram.edges[:, 0], diagram.edges[:, 1]
    weight = integrals.edge / np.linalg.norm(diagram.sites[i] - diagram.sites[j], axis=1)
    diagonal = np.bincount(i, weights=weight, minlength=n) + np.bincount(
        j, weights=weight, minlength=n
    )
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    data = np.concatenate([-weight, -weight, diagonal])
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


@dataclass
class TransportResult:
    heights: FloatArray
    diagram: PowerDiagram
    integrals: CellIntegrals
    iterations: int
    residual: float
    trace: list[dict[str, Any]] = field(default_factory=list)

    @property
    def power_heights(self) -> FloatArray:
        heights = power_heights(self.diagram.sites, self.heights)
        return heights - heights.mean()

    def centroids(self) -> FloatArray:
        return self.integrals.centroids()


def _evaluate(
    sites: SiteSet, heights: FloatArray, density: SourceDensity, clip_radius: float
) -> Tuple[PowerDiagram, CellIntegrals]:
    diagram = power_diagram(sites.sites, power_heights(sites.sites, heights), clip_radius)
    return diagram, density.integrate(diagram)


def solve_omt(
    sites: SiteSet,
    density: SourceDensity,
    clip_radius: float = DEFAULT_CLIP_RADIUS,
    tol: float = DEFAULT_EPS_OMT,
    max_iter: int = 100,
) -> TransportResult:
    """Damped Newton iteration on the transport energy.

    Stops when max |w_i - ν_i| / max ν < `tol`. A step is accepted only if every cell keeps
    positive mass and the gradient norm decreases; otherwise it is halved.
    """
    total = density.total_mass()
    if abs(sites.masses.sum() - total) > MASS_TOLERANCE * total:
        raise ValueError(
            f"target masses sum to {sites.masses.sum():.12g} but the density carries {total:.12g}"
        )
    assert sites.heights is not None
    heights = sites.heights - sites.heights.mean()
    scale = float(sites.masses.max())
    diagram, integrals = _evaluate(sites, heights, density, clip_radius)
    if (integrals.mass <= 0).any():
        raise DegenerateGeometryError(
            "initial heights leave cells without mass", faces=np.flatnonzero(integrals.mass <= 0)
        )
    gradient = omt_gradient(sites, integrals)
    residual = float(np.abs(gradient).max()) / scale
    trace: list[dict[str, Any]] = []
    step = 0.0
    iteration = 0
    while True:
        trace.append(
            {
                "iteration": iteration,
                "residual": residual,
                "step": step,
                "min_cell_mass": float(integrals.mass.min()),
            }
        )
        logger.debug("omt iteration %d: residual %.3e step %.3g", iteration, residual, step)
        if residual < tol:
            break
        if iteration >= max_iter:
            raise ConvergenceError(
                "transport solver did not converge", residual=residual, iterations=iteration
            )
        direction = -solve_pinned(omt_hessian(diagram, integrals), gradient)
        norm = float(np.linalg.norm(gradient))
        step = 1.0
        while True:
            candidate = heights + step * direction
            try:
                new_diagram, new_integrals = _evaluate(sites, candidate, density, clip_radius)
                new_gradient = omt_gradient(sites, new_integrals)
                if (new_integrals.mass > 0).all() and np.linalg.norm(new_gradient) < norm:
                    break
            except DegenerateGeometryError:
                pass
            step *= 0.5
            if step < MIN_STEP:
                raise ConvergenceError(
                    "transport line search failed", residual=residual, iterations=iteration
                )
        heights = candidate - candidate.mean()
        diagram, integrals, gradient = new_diagram, new_integrals, new_gradient
        residual = float(np.abs(gradient).max()) / scale
        iteration += 1

    logger.info("transport converged in %d iterations (residual %.3e)", iteration, residual)
    return TransportResult(heights, diagram, integrals, iteration, residual, trace)


@dataclass
class TransportMap:
    embedding: SphericalEmbedding
    transport: Optional[TransportResult]
    t: float
    pole_face: Optional[int] = None


def _pole_rotation(positions: FloatArray, faces: IntArray) -> Tuple[FloatArray, int]:
    """Rotation putting the north pole inside the face whose centroid is farthest from its
    corners, and that face."""
    corners = positions[faces]
    centers = corners.sum(axis=1)
    centers /= np.linalg.norm(centers, axis=1)[:, None]
    clearance = np.linalg.norm(corners - centers[:, None, :], axis=2).min(axis=1)
    face = int(np.argmax(clearance))
    if clearance[face] < POLE_CLEARANCE:
        raise DegenerateGeometryError(
            "no face is large enough to hold the projection pole", faces=[face]
        )
    return landmark_rotation(centers[face], corners[face, 0]), face


def _scaled_masses(mesh: HalfedgeMesh) -> Tuple[FloatArray, FloatArray]:
    assert mesh.positions is not None
    factor = 4.0 * math.pi / total_area(mesh)
    return (
        vertex_area_weights(mesh) * factor,
        positions_face_areas(mesh.positions, mesh.faces) * factor,
    )


def balanced_map(
    mesh: HalfedgeMesh,
    conformal: SphericalEmbedding,
    t: float,
    clip_radius: float = DEFAULT_CLIP_RADIUS,
    tol: float = DEFAULT_EPS_OMT,
    landmarks: Optional[Tuple[int, int]] = None,
    max_iter: int = 100,
) -> TransportMap:
    """Spherical map trading angle for area: t = 0 is the conformal map itself, t = 1 the
    area-preserving map.

    Vertices keep their original one-third areas as target masses; the source density mixes
    the conformal pushforward of the surface area (weight 1 - t) with the sphere's area (weight
    t). Each vertex moves to the density centroid of its power cell.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    if t == 0.0:
        return TransportMap(SphericalEmbedding(mesh, conformal.positions.copy()), None, t)

    vertex_masses, face_masses = _scaled_masses(mesh)
    rotation, pole_face = _pole_rotation(conformal.positions, mesh.faces)
    planar = sphere_to_plane(conformal.positions @ rotation.T)
    if not np.isfinite(planar).all():
        raise DegenerateGeometryError("a vertex projects to infinity")
    sites_xy = np.column_stack([planar.real, planar.imag])

    spherical = SphericalDensity(clip_radius, normalize=True)
    if t == 1.0:
        density: SourceDensity = spherical
    else:
        pushforward = PiecewiseConstantDensity.pushforward(
            sites_xy, mesh.faces, face_masses, clip_radius, exterior_face=pole_face
        )
        density = interpolate_density(1.0 - t, pushforward, spherical)
    masses = vertex_masses * (density.total_mass() / vertex_masses.sum())
    result = solve_omt(SiteSet(sites_xy, masses), density, clip_radius, tol, max_iter)

    centroids = result.centroids()
    positions = plane_to_sphere(centroids[:, 0] + 1j * centroids[:, 1]) @ rotation
    if landmarks is not None:
        top, front = landmarks
        positions = positions @ landmark_rotation(positions[top], positions[front]).T
    positions /= np.linalg.norm(positions, axis=1)[:, None]
    embedding = SphericalEmbedding(mesh, positions)
    flipped = embedding.flipped_faces()
    if flipped.size:
        logger.warning("transport map at t=%g has %d flipped faces", t, flipped.size)
    return TransportMap(embedding, result, t, pole_face)


def area_preserving_spherical_map(
    mesh: HalfedgeMesh,
    conformal: SphericalEmbedding,
    clip_radius: float = DEFAULT_CLIP_RADIUS,
    tol: float = DEFAULT_EPS_OMT,
    landmarks: Optional[Tuple[int, int]] = None,
    max_iter: int = 100,
) -> TransportMap:
    return balanced_map(mesh, conformal, 1.0, clip_radius, tol, landmarks, max_iter)
