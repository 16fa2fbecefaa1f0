"""Discrete Yamabe flow on a Delaunay-maintained triangulation, flat layout, and the
annulus / disk maps built on top of it."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from sphereflow._config import DEFAULT_EPS_YAMABE
from sphereflow.errors import (
    ConvergenceError,
    DegenerateGeometryError,
    InadmissibleCurvatureError,
    TopologyError,
)
from sphereflow.mesh import (
    FloatArray,
    HalfedgeMesh,
    IntArray,
    check_triangle_inequality,
    corner_angles,
    cotan_laplacian,
    make_delaunay,
    next_halfedge,
    vertex_curvature,
)

logger = logging.getLogger(__name__)

ComplexArray = NDArray[np.complex128]

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(10)
MIN_STEP = 1e-12
LAYOUT_TOLERANCE = 1e-6
CIRCLE_TOLERANCE = 1e-4


@dataclass
class ConformalState:
    """Conformal factor `u` over the vertices of `mesh` and the edge constants `beta`.

    Edge lengths are e^{u_i} β_ij e^{u_j}. `mesh` is the current (possibly flipped)
    triangulation and `beta` is indexed by its edges.
    """

    mesh: HalfedgeMesh
    u: FloatArray
    target_curvature: FloatArray
    beta: FloatArray


@dataclass
class YamabeResult:
    state: ConformalState
    lengths: FloatArray
    iterations: int
    residual: float
    flips: int
    trace: list[dict[str, Any]] = field(default_factory=list)

    @property
    def mesh(self) -> HalfedgeMesh:
        return self.state.mesh


@dataclass
class PlanarEmbedding:
    """Complex coordinate per vertex of `mesh`.

    `corner_positions` keeps the per-face coordinates when the layout is multi-valued
    (a cut surface); `positions` then holds the first placement of each vertex.
    """

    mesh: HalfedgeMesh
    positions: ComplexArray
    corner_positions: Optional[ComplexArray] = None

    def signed_areas(self) -> FloatArray:
        return signed_areas(self.positions, self.mesh.faces)

    def flipped_faces(self) -> IntArray:
        return np.flatnonzero(self.signed_areas() <= 0.0)


@dataclass
class AnnulusMap:
    embedding: PlanarEmbedding
    inner_radius: float
    outer_radius: float
    inner_loop: IntArray
    outer_loop: IntArray
    circle_deviation: float
    flow: YamabeResult
    cut_path: IntArray

    @property
    def modulus(self) -> float:
        return self.outer_radius / self.inner_radius


@dataclass
class RiemannMap:
    embedding: PlanarEmbedding
    punctured_face: int
    hole_radius: float
    circle_deviation: float
    annulus: AnnulusMap

    @property
    def conformal_factor(self) -> FloatArray:
        return self.annulus.flow.state.u


def signed_areas(positions: ComplexArray, faces: IntArray) -> FloatArray:
    p = np.asarray(positions)[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1.real * e2.imag - e1.imag * e2.real)


def conformal_lengths(state: ConformalState) -> FloatArray:
    """Lengths e^{u_i} β_ij e^{u_j}; raises DegenerateGeometryError if a face becomes invalid."""
    ev = state.mesh.edge_vertices()
    lengths = np.exp(state.u[ev[:, 0]] + state.u[ev[:, 1]]) * state.beta
    check_triangle_inequality(state.mesh, lengths)
    return lengths


def ricci_energy_gradient(state: ConformalState, curvature: FloatArray) -> FloatArray:
    return state.target_curvature - curvature


def _curvature_at(state: ConformalState, u: FloatArray) -> FloatArray:
    lengths = conformal_lengths(replace(state, u=u))
    return vertex_curvature(state.mesh, corner_angles(state.mesh, lengths))


def _energy_change(state: ConformalState, u0: FloatArray, du: FloatArray) -> float:
    # Gauss-Legendre quadrature of <K - K_target, du> along u0 + s du, s in [0, 1]
    total = 0.0
    for node, weight in zip(GAUSS_NODES, GAUSS_WEIGHTS):
        curvature = _curvature_at(state, u0 + 0.5 * (node + 1.0) * du)
        total += 0.5 * weight * float(np.dot(curvature - state.target_curvature, du))
    return total


def ricci_energy(state: ConformalState) -> float:
    """Convex Ricci energy of `state.u` relative to u = 0 on the current triangulation.

    Its gradient is K − K_target, the negative of `ricci_energy_gradient`, and its Hessian is
    the cotan Laplacian.
    """
    return _energy_change(state, np.zeros_like(state.u), state.u)


def check_admissible(mesh: HalfedgeMesh, target_curvature: FloatArray) -> None:
    if len(target_curvature) != mesh.n_vertices:
        raise ValueError("target curvature must have one value per vertex")
    if (target_curvature >= 2.0 * math.pi).any():
        raise InadmissibleCurvatureError("target curvature must be below 2π at every vertex")
    residual = math.fsum(target_curvature.tolist()) - 2.0 * math.pi * mesh.euler_characteristic
    if abs(residual) > 1e-9:
        raise InadmissibleCurvatureError(
            f"target curvature violates Gauss-Bonnet by {residual:.3e} "
            f"(Euler characteristic {mesh.euler_characteristic})"
        )


def solve_pinned(matrix: sparse.spmatrix, rhs: FloatArray, pin: int = 0) -> FloatArray:
    """Solve a Laplacian-type system with a constant null space; the result has zero mean."""
    n = matrix.shape[0]
    keep = np.ones(n, dtype=bool)
    keep[pin] = False
    reduced = sparse.csc_matrix(matrix)[keep][:, keep]
    solution = np.zeros(n)
    if n > 1:
        solution[keep] = spsolve(reduced, rhs[keep])
    if not np.isfinite(solution).all():
        raise ConvergenceError("Hessian solve failed (singular system)")
    return solution - solution.mean()


def yamabe_flow(
    mesh: HalfedgeMesh,
    target_curvature: FloatArray,
    lengths: Optional[FloatArray] = None,
    tol: float = DEFAULT_EPS_YAMABE,
    step: float = 1.0,
    max_iter: int = 500,
) -> YamabeResult:
    """Newton's method on the Ricci energy with eager Delaunay flips after every step.

    The input mesh is left untouched; the flipped triangulation is returned on the result.
    """
    target = np.asarray(target_curvature, dtype=np.float64)
    check_admissible(mesh, target)
    metric = mesh.lengths if lengths is None else lengths
    if metric is None:
        raise ValueError("the mesh has no metric; pass lengths or positions")
    metric = np.array(metric, dtype=np.float64)
    work = mesh.copy()
    check_triangle_inequality(work, metric)
    flips = make_delaunay(work, metric)
    state = ConformalState(work, np.zeros(mesh.n_vertices), target, metric.copy())

    angles = corner_angles(work, metric)
    curvature = vertex_curvature(work, angles)
    energy = 0.0
    accepted_step = 0.0
    step_flips = flips
    trace: list[dict[str, Any]] = []
    iteration = 0
    while True:
        gradient = ricci_energy_gradient(state, curvature)
        residual = float(np.abs(gradient).max()) if gradient.size else 0.0
        trace.append(
            {
                "iteration": iteration,
                "residual": residual,
                "energy": energy,
                "step": accepted_step,
                "flips": step_flips,
            }
        )
        logger.debug(
            "yamabe iteration %d: residual %.3e energy %.6e", iteration, residual, energy
        )
        if residual < tol:
            break
        if iteration >= max_iter:
            raise ConvergenceError(
                "Yamabe flow did not converge", residual=residual, iterations=iteration
            )

        direction = solve_pinned(cotan_laplacian(work, angles), gradient)
        s = step
        while True:
            try:
                change = _energy_change(state, state.u, s * direction)
                if change <= 0.0:
                    break
            except DegenerateGeometryError:
                pass
            s *= 0.5
            if s < MIN_STEP:
                raise ConvergenceError(
                    "Yamabe line search failed", residual=residual, iterations=iteration
                )

        state.u = state.u + s * direction
        metric = conformal_lengths(state)
        step_flips = make_delaunay(work, metric)
        if step_flips:
            ev = work.edge_vertices()
            state.beta = metric * np.exp(-(state.u[ev[:, 0]] + state.u[ev[:, 1]]))
        flips += step_flips
        energy += change
        accepted_step = s
        angles = corner_angles(work, metric)
        curvature = vertex_curvature(work, angles)
        iteration += 1

    state.u = state.u - state.u.mean()
    final_lengths = conformal_lengths(state)
    logger.info(
        "Yamabe flow converged in %d iterations (residual %.3e, %d flips)",
        iteration,
        residual,
        flips,
    )
    return YamabeResult(state, final_lengths, iteration, residual, flips, trace)


def layout_flat_metric(
    mesh: HalfedgeMesh,
    lengths: FloatArray,
    cut_edges: Optional[NDArray[np.bool_]] = None,
    seed_face: int = 0,
    tol: float = LAYOUT_TOLERANCE,
) -> PlanarEmbedding:
    """Isometric planar layout of a flat metric by breadth-first face unfolding.

    Faces are never unfolded across an edge flagged in `cut_edges`.
    """
    angles = corner_angles(mesh, lengths)
    hl = mesh.halfedge_lengths(lengths)
    cut = np.zeros(mesh.n_edges, dtype=bool) if cut_edges is None else np.asarray(cut_edges)
    corners = np.zeros((mesh.n_faces, 3), dtype=np.complex128)
    placed = np.zeros(mesh.n_faces, dtype=bool)

    corners[seed_face, 1] = hl[seed_face, 0]
    corners[seed_face, 2] = hl[seed_face, 2] * np.exp(1j * angles[seed_face, 0])
    placed[seed_face] = True
    queue = deque([seed_face])
    while queue:
        f = queue.popleft()
        for c in range(3):
            h = 3 * f + c
            t = int(mesh.twin[h])
            if t < 0 or cut[mesh.edge[h]] or placed[t // 3]:
                continue
            g, a = divmod(t, 3)
            p_i, p_j = corners[f, c], corners[f, (c + 1) % 3]
            direction = (p_i - p_j) / abs(p_i - p_j)
            corners[g, a] = p_j
            corners[g, (a + 1) % 3] = p_i
            corners[g, (a + 2) % 3] = p_j + hl[g, (a + 2) % 3] * direction * np.exp(
                1j * angles[g, a]
            )
            placed[g] = True
            queue.append(g)

    if not placed.all():
        raise TopologyError("layout did not reach every face; the cut disconnects the surface")

    h = np.flatnonzero(mesh.twin >= 0)
    h = h[~cut[mesh.edge[h]]]
    t = mesh.twin[h]
    here = corners.reshape(-1)[h]
    there = corners.reshape(-1)[next_halfedge(t)]
    scale = max(1.0, float(np.abs(corners).max()))
    mismatch = float(np.abs(here - there).max()) if h.size else 0.0
    if mismatch > tol * scale:
        raise DegenerateGeometryError(
            f"metric is not flat along the layout (holonomy mismatch {mismatch:.3e})",
            faces=np.unique(h[np.abs(here - there) > tol * scale] // 3).tolist(),
        )

    positions = np.full(mesh.n_vertices, np.nan + 0j, dtype=np.complex128)
    vertices, first = np.unique(mesh.origin, return_index=True)
    positions[vertices] = corners.reshape(-1)[first]
    return PlanarEmbedding(mesh, positions, corners)


def _edge_lookup(mesh: HalfedgeMesh, lengths: FloatArray) -> dict[tuple[int, int], int]:
    lookup: dict[tuple[int, int], int] = {}
    for e, (a, b) in enumerate(mesh.edge_vertices().tolist()):
        key = (min(a, b), max(a, b))
        if key not in lookup or lengths[e] < lengths[lookup[key]]:
            lookup[key] = e
    return lookup


def shortest_cut(
    mesh: HalfedgeMesh, lengths: FloatArray, source: IntArray, target: IntArray
) -> IntArray:
    """Vertex path of the shortest edge path from the loop `source` to the loop `target`.

    Ties between target vertices go to the smallest vertex id.
    """
    graph = mesh.vertex_adjacency(lengths)
    distances, predecessors, _ = csgraph.dijkstra(
        graph, indices=source, min_only=True, return_predecessors=True
    )
    candidates = np.sort(target)
    v = int(candidates[np.argmin(distances[candidates])])
    if not np.isfinite(distances[v]):
        raise TopologyError("boundary loops are not connected")
    path = [v]
    while predecessors[v] >= 0:
        v = int(predecessors[v])
        path.append(v)
    return np.array(path[::-1], dtype=np.int64)


def map_annulus(
    mesh: HalfedgeMesh,
    lengths: Optional[FloatArray] = None,
    tol: float = DEFAULT_EPS_YAMABE,
    max_iter: int = 500,
    outer: Optional[int] = None,
) -> AnnulusMap:
    """Conformal map of a topological annulus onto {r <= |z| <= R}.

    `outer` selects which boundary loop (by index in `mesh.boundary_loops()`) becomes the
    outer circle; by default the larger image circle is kept as the outer one.
    """
    loops = mesh.boundary_loops()
    if len(loops) != 2 or mesh.euler_characteristic != 0:
        raise TopologyError(
            "annulus map needs exactly two boundary loops and Euler characteristic 0, "
            f"got {len(loops)} loop(s) and Euler characteristic {mesh.euler_characteristic}"
        )
    flow = yamabe_flow(mesh, np.zeros(mesh.n_vertices), lengths, tol=tol, max_iter=max_iter)
    work, metric = flow.state.mesh, flow.lengths

    path = shortest_cut(work, metric, loops[0], loops[1])
    lookup = _edge_lookup(work, metric)
    cut = np.zeros(work.n_edges, dtype=bool)
    along = []
    for a, b in zip(path[:-1], path[1:]):
        e = lookup[(min(a, b), max(a, b))]
        cut[e] = True
        h = int(work.edge_halfedge[e])
        along.append(h if work.origin[h] == a else int(work.twin[h]))

    layout = layout_flat_metric(work, metric, cut_edges=cut)
    assert layout.corner_positions is not None
    flat_corners = layout.corner_positions.reshape(-1)
    # every h runs a -> b along the path, so its face lies left of the cut
    h = np.array(along, dtype=np.int64)
    t = work.twin[h]
    periods = np.concatenate(
        [
            flat_corners[next_halfedge(t)] - flat_corners[h],
            flat_corners[t] - flat_corners[next_halfedge(h)],
        ]
    )
    period = complex(periods.mean())
    spread = float(np.abs(periods - period).max())
    if abs(period) == 0.0 or spread > LAYOUT_TOLERANCE * max(1.0, abs(period)):
        raise DegenerateGeometryError(f"cut holonomy is not a translation (spread {spread:.3e})")

    z = (layout.positions - layout.positions[path[0]]) * (2j * math.pi / period)
    positions = np.exp(z)
    radii = [float(np.abs(positions[loop]).mean()) for loop in loops]
    outer_index = int(np.argmax(radii)) if outer is None else outer
    if radii[outer_index] < radii[1 - outer_index]:
        positions = 1.0 / positions
        radii = [1.0 / r for r in radii]

    deviation = max(
        float(np.abs(np.abs(positions[loop]) - r).max() / r) for loop, r in zip(loops, radii)
    )
    if deviation > CIRCLE_TOLERANCE:
        logger.warning("annulus boundary deviates from a circle by %.3e", deviation)
    embedding = PlanarEmbedding(mesh, positions)
    return AnnulusMap(
        embedding=embedding,
        inner_radius=radii[1 - outer_index],
        outer_radius=radii[outer_index],
        inner_loop=loops[1 - outer_index],
        outer_loop=loops[outer_index],
        circle_deviation=deviation,
        flow=flow,
        cut_path=path,
    )


def puncture_face(mesh: HalfedgeMesh) -> int:
    """Interior face farthest (by vertex graph distance) from the boundary; lowest id on ties."""
    loops = mesh.boundary_loops()
    boundary = np.concatenate(loops)
    distances = csgraph.dijkstra(
        mesh.vertex_adjacency(), unweighted=True, indices=boundary, min_only=True
    )
    face_distance = distances[mesh.faces]
    interior = (face_distance > 0).all(axis=1)
    if not interior.any():
        raise TopologyError("puncturing leaves no interior face")
    score = np.where(interior, face_distance.min(axis=1), -1.0)
    return int(np.argmax(score))


def _transfer_lengths(
    source: HalfedgeMesh, lengths: FloatArray, target: HalfedgeMesh
) -> FloatArray:
    lookup = _edge_lookup(source, lengths)
    return np.array(
        [lengths[lookup[(min(a, b), max(a, b))]] for a, b in target.edge_vertices().tolist()]
    )


def riemann_map(
    mesh: HalfedgeMesh,
    lengths: Optional[FloatArray] = None,
    tol: float = DEFAULT_EPS_YAMABE,
    max_iter: int = 500,
) -> RiemannMap:
    """Conformal map of a topological disk onto the unit disk.

    One interior face is removed, the resulting annulus is mapped with the original boundary
    outside, and the face is put back over the small inner circle.
    """
    loops = mesh.boundary_loops()
    if len(loops) != 1 or mesh.euler_characteristic != 1:
        raise TopologyError(
            "Riemann map needs a topological disk, "
            f"got {len(loops)} boundary loop(s) and Euler characteristic "
            f"{mesh.euler_characteristic}"
        )
    metric = mesh.lengths if lengths is None else lengths
    if metric is None:
        raise ValueError("the mesh has no metric; pass lengths or positions")
    face = puncture_face(mesh)
    punctured = HalfedgeMesh(
        np.delete(mesh.faces, face, axis=0), mesh.positions, n_vertices=mesh.n_vertices
    )
    punctured_lengths = _transfer_lengths(mesh, metric, punctured)
    outer = [int(loop.min()) for loop in punctured.boundary_loops()].index(int(loops[0].min()))
    annulus = map_annulus(punctured, punctured_lengths, tol=tol, max_iter=max_iter, outer=outer)

    positions = annulus.embedding.positions / annulus.outer_radius
    deviation = float(np.abs(np.abs(positions[loops[0]]) - 1.0).max())
    embedding = PlanarEmbedding(mesh, positions)
    flipped = embedding.flipped_faces()
    if flipped.size:
        logger.warning("Riemann map has %d flipped faces", flipped.size)
    return RiemannMap(
        embedding=embedding,
        punctured_face=face,
        hole_radius=annulus.inner_radius / annulus.outer_radius,
        circle_deviation=deviation,
        annulus=annulus,
    )
