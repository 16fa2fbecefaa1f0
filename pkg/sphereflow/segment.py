"""Split a closed genus-0 mesh into two disks along the zero level set of its first nontrivial
Laplace-Beltrami eigenfunction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh, splu

from sphereflow._config import DEFAULT_SEED
from sphereflow.errors import (
    ConnectivityMismatchError,
    ConvergenceError,
    SegmentationError,
    TopologyError,
)
from sphereflow.mesh import (
    FloatArray,
    HalfedgeMesh,
    IntArray,
    corner_angles,
    cotan_laplacian,
    positions_face_areas,
    vertex_area_weights,
)

logger = logging.getLogger(__name__)

ZERO_PERTURBATION = 1e-12
CROSSING_CLAMP = 1e-9
MIN_SEAM_VERTICES = 4
EIGEN_TOLERANCE = 1e-12
MAX_EIGEN_RESIDUAL = 1e-8
AREA_RATIO_WARN = (0.5, 2.0)
AREA_RATIO_FAIL = (0.25, 4.0)


@dataclass
class EigenFunction:
    """First nontrivial eigenfunction, normalized so Σ w f = 0 and Σ w f² = 1."""

    values: FloatArray
    eigenvalue: float
    residual: float


@dataclass
class CutLoop:
    """Closed curve crossing mesh edges, oriented with the positive side on its left.

    Point k lies on edge `edges[k]` at parameter `params[k]` measured from the edge's first
    endpoint (see `HalfedgeMesh.edge_vertices`). The curve runs through `faces[k]` from point
    k - 1 to point k.
    """

    edges: IntArray
    params: FloatArray
    faces: IntArray
    points: FloatArray
    length: float
    positive: NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.edges)


@dataclass
class SplitResult:
    """Two disks cut from `mesh` along `seam`.

    `mesh` is the input with the loop vertices inserted; its first `n_original` vertices are
    the input vertices. `vertex_map0` / `vertex_map1` give the `mesh` id of every disk vertex.
    `first[k]` and `second[k]` are the local ids of seam vertex `seam[k]` in disk 0 and disk 1.
    Disk 0 lies on the positive side.
    """

    mesh: HalfedgeMesh
    disk0: HalfedgeMesh
    disk1: HalfedgeMesh
    vertex_map0: IntArray
    vertex_map1: IntArray
    seam: IntArray
    first: IntArray
    second: IntArray
    n_original: int
    area_ratio: float
    loop: CutLoop


def _check_closed_connected(mesh: HalfedgeMesh) -> None:
    if not mesh.is_closed:
        raise TopologyError("segmentation needs a closed mesh")
    n_components, _ = csgraph.connected_components(mesh.vertex_adjacency(), directed=False)
    if n_components != 1:
        raise TopologyError(f"mesh is disconnected ({n_components} components)")


def first_eigenfunction(
    mesh: HalfedgeMesh, seed: int = DEFAULT_SEED, tol: float = EIGEN_TOLERANCE
) -> EigenFunction:
    """Smallest positive eigenpair of L f = λ M f with a lumped vertex-area mass matrix."""
    _check_closed_connected(mesh)
    if mesh.positions is None:
        raise ValueError("the eigenfunction needs vertex positions")
    weights = vertex_area_weights(mesh)
    stiffness = 0.5 * cotan_laplacian(mesh, corner_angles(mesh, mesh.euclidean_lengths()))
    stiffness = sparse.csc_matrix(stiffness)
    mass = sparse.diags(weights, format="csc")

    # shift-invert around a small negative sigma keeps the factorization nonsingular
    sigma = -0.01 * 4.0 * math.pi / float(weights.sum())
    lu = splu(stiffness - sigma * mass)
    op_inv = LinearOperator(matvec=lu.solve, shape=stiffness.shape, dtype=stiffness.dtype)
    start = np.random.default_rng(seed).standard_normal(mesh.n_vertices)
    try:
        eigenvalues, eigenvectors = eigsh(
            stiffness, k=2, M=mass, sigma=sigma, OPinv=op_inv, which="LM", v0=start, tol=tol
        )
    except (ArpackNoConvergence, ArpackError) as e:
        raise ConvergenceError(f"eigen-solver failed: {e}") from e

    nontrivial = np.flatnonzero(eigenvalues > 1e-10)
    if nontrivial.size == 0:
        raise ConvergenceError("eigen-solver returned only the constant eigenvector")
    index = int(nontrivial[np.argmin(eigenvalues[nontrivial])])
    values = eigenvectors[:, index]
    values = values - np.dot(weights, values) / weights.sum()
    values = values / math.sqrt(float(np.dot(weights, values**2)))
    # Rayleigh quotient of the normalized vector; the mass norm is 1
    eigenvalue = float(values @ (stiffness @ values))
    if values[np.argmax(np.abs(values))] < 0:
        values = -values

    residual = float(
        np.linalg.norm(stiffness @ values - eigenvalue * weights * values)
        / np.linalg.norm(values)
    )
    if residual > MAX_EIGEN_RESIDUAL:
        raise ConvergenceError("eigenpair is inaccurate", residual=residual)
    logger.info("first eigenvalue %.6g (residual %.3e)", eigenvalue, residual)
    return EigenFunction(values, eigenvalue, residual)


def _crossing_params(values: FloatArray, ev: IntArray) -> FloatArray:
    fi, fj = values[ev[:, 0]], values[ev[:, 1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = fi / (fi - fj)
    return np.clip(t, CROSSING_CLAMP, 1.0 - CROSSING_CLAMP)


def zero_level_loop(mesh: HalfedgeMesh, values: FloatArray | EigenFunction) -> CutLoop:
    """The longest closed component of {f = 0}, positive side on the left.

    Vertex values that are exactly zero are moved to +1e-12 first.
    """
    if isinstance(values, EigenFunction):
        values = values.values
    f = np.where(np.asarray(values, dtype=np.float64) == 0.0, ZERO_PERTURBATION, values)
    if len(f) != mesh.n_vertices:
        raise ValueError("one value per vertex is required")
    positive = f > 0
    if positive.all() or not positive.any():
        raise SegmentationError("no zero level set: the function does not change sign")
    if not mesh.is_closed:
        raise TopologyError("zero level loops are extracted on closed meshes only")

    origin = mesh.origin
    crossed = positive[origin] != positive[mesh.faces[:, [1, 2, 0]].reshape(-1)]
    # inside a face the curve leaves through the crossed halfedge starting at a negative vertex
    exit_halfedge = np.full(mesh.n_faces, -1, dtype=np.int64)
    exits = np.flatnonzero(crossed & ~positive[origin])
    exit_halfedge[exits // 3] = exits

    ev = mesh.edge_vertices()
    params = _crossing_params(f, ev)
    visited = np.zeros(mesh.n_faces, dtype=bool)
    loops = []
    for start in np.flatnonzero(exit_halfedge >= 0):
        if visited[start]:
            continue
        faces, edges = [], []
        face = int(start)
        while not visited[face]:
            visited[face] = True
            h = int(exit_halfedge[face])
            faces.append(face)
            edges.append(int(mesh.edge[h]))
            face = int(mesh.twin[h]) // 3
        if face != start:
            raise SegmentationError("zero level loop fails to close")
        loops.append((np.array(faces, dtype=np.int64), np.array(edges, dtype=np.int64)))

    best: Optional[CutLoop] = None
    for faces_k, edges_k in loops:
        t = params[edges_k]
        if mesh.positions is not None:
            p0 = mesh.positions[ev[edges_k, 0]]
            p1 = mesh.positions[ev[edges_k, 1]]
            points = p0 + t[:, None] * (p1 - p0)
            length = float(np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1).sum())
        else:
            points = np.zeros((len(edges_k), 3))
            length = float(len(edges_k))
        if best is None or length > best.length:
            best = CutLoop(edges_k, t, faces_k, points, length, positive)
    assert best is not None
    if len(loops) > 1:
        logger.info("zero level set has %d loops; keeping the longest", len(loops))
    return best


def _cut_faces(mesh: HalfedgeMesh, loop: CutLoop) -> list[tuple[int, ...]]:
    """Faces of the mesh with loop vertex k inserted as vertex V + k."""
    n = mesh.n_vertices
    new_vertex = {int(e): n + k for k, e in enumerate(loop.edges)}
    crossed_faces = set(int(f) for f in loop.faces)
    positions = mesh.positions
    faces: list[tuple[int, ...]] = [
        tuple(face) for f, face in enumerate(mesh.faces.tolist()) if f not in crossed_faces
    ]
    for f in sorted(crossed_faces):
        polygon = []
        for c in range(3):
            h = 3 * f + c
            polygon.append(int(mesh.faces[f, c]))
            e = int(mesh.edge[h])
            if e in new_vertex:
                polygon.append(new_vertex[e])
        cut = [i for i, v in enumerate(polygon) if v >= n]
        if len(cut) != 2:
            raise SegmentationError("face is crossed more than once by the loop")
        a, b = cut
        first = polygon[a : b + 1]
        second = polygon[b:] + polygon[: a + 1]
        for piece in (first, second):
            if len(piece) == 3:
                faces.append(tuple(piece))
            else:
                faces.extend(_split_quad(piece, positions, loop, n))
    return faces


def _point(v: int, positions: Optional[FloatArray], loop: CutLoop, n: int) -> FloatArray:
    if v >= n:
        return loop.points[v - n]
    assert positions is not None
    return positions[v]


def _split_quad(
    quad: list[int], positions: Optional[FloatArray], loop: CutLoop, n: int
) -> list[tuple[int, int, int]]:
    q0, q1, q2, q3 = quad
    if positions is not None:
        d02 = np.linalg.norm(_point(q0, positions, loop, n) - _point(q2, positions, loop, n))
        d13 = np.linalg.norm(_point(q1, positions, loop, n) - _point(q3, positions, loop, n))
        if d13 < d02:
            return [(q0, q1, q3), (q1, q2, q3)]
    return [(q0, q1, q2), (q0, q2, q3)]


def _bisect_seam(
    faces: list[tuple[int, ...]], positions: FloatArray, seam: list[int]
) -> Tuple[list[tuple[int, ...]], FloatArray, list[int]]:
    """Insert a midpoint on every seam chord."""
    midpoint = {}
    refined_seam = []
    extra = []
    for a, b in zip(seam, seam[1:] + seam[:1]):
        m = len(positions) + len(extra)
        extra.append(0.5 * (positions[a] + positions[b]))
        midpoint[(a, b)] = midpoint[(b, a)] = m
        refined_seam.extend([a, m])
    new_faces = []
    for face in faces:
        for c in range(3):
            key = (face[c], face[(c + 1) % 3])
            if key in midpoint:
                m, w = midpoint[key], face[(c + 2) % 3]
                new_faces.extend([(face[c], m, w), (m, face[(c + 1) % 3], w)])
                break
        else:
            new_faces.append(face)
    return new_faces, np.vstack([positions, extra]), refined_seam


def split_mesh(mesh: HalfedgeMesh, loop: CutLoop) -> SplitResult:
    """Cut `mesh` along `loop` into two disks sharing the seam."""
    if mesh.positions is None:
        raise ValueError("splitting needs vertex positions")
    faces = _cut_faces(mesh, loop)
    positions = np.vstack([mesh.positions, loop.points])
    seam = list(range(mesh.n_vertices, mesh.n_vertices + len(loop)))
    while len(seam) < MIN_SEAM_VERTICES:
        faces, positions, seam = _bisect_seam(faces, positions, seam)
    cut = HalfedgeMesh(faces, positions)

    ev = cut.edge_vertices()
    seam_keys = {(min(a, b), max(a, b)) for a, b in zip(seam, seam[1:] + seam[:1])}
    is_seam = np.array([(min(a, b), max(a, b)) in seam_keys for a, b in ev.tolist()], dtype=bool)
    keep = np.flatnonzero((cut.twin >= 0) & ~is_seam[cut.edge])
    adjacency = sparse.coo_matrix(
        (np.ones(len(keep)), (keep // 3, cut.twin[keep] // 3)), shape=(cut.n_faces, cut.n_faces)
    )
    n_components, labels = csgraph.connected_components(adjacency, directed=False)
    if n_components != 2:
        raise SegmentationError(
            f"cut loop does not separate the mesh into two parts ({n_components} components)"
        )

    # the face holding halfedge seam[0] -> seam[1] lies left of the loop
    left_face = next(
        f
        for f, face in enumerate(cut.faces.tolist())
        for c in range(3)
        if face[c] == seam[0] and face[(c + 1) % 3] == seam[1]
    )
    positive_mask = labels == labels[left_face]
    disk0, vertex_map0 = cut.submesh(positive_mask)
    disk1, vertex_map1 = cut.submesh(~positive_mask)
    seam_array = np.array(seam, dtype=np.int64)
    first = np.searchsorted(vertex_map0, seam_array)
    second = np.searchsorted(vertex_map1, seam_array)

    for disk, name in ((disk0, "positive"), (disk1, "negative")):
        if disk.euler_characteristic != 1 or len(disk.boundary_loops()) != 1:
            raise SegmentationError(
                f"{name} side is not a disk (Euler characteristic {disk.euler_characteristic})"
            )
    boundary = disk0.boundary_loops()[0]
    offset = int(np.flatnonzero(boundary == first[0])[0])
    if not np.array_equal(np.roll(boundary, -offset), first):
        raise SegmentationError("seam order does not match the boundary of the positive side")

    area0 = float(positions_face_areas(cut.positions, cut.faces[positive_mask]).sum())
    area1 = float(positions_face_areas(cut.positions, cut.faces[~positive_mask]).sum())
    ratio = area0 / area1
    if not AREA_RATIO_FAIL[0] <= ratio <= AREA_RATIO_FAIL[1]:
        raise SegmentationError(f"segments are too unbalanced (area ratio {ratio:.3f})")
    if not AREA_RATIO_WARN[0] <= ratio <= AREA_RATIO_WARN[1]:
        logger.warning("segment areas are unbalanced (ratio %.3f)", ratio)
    logger.info(
        "split into disks of %d and %d faces, %d seam vertices, area ratio %.4f",
        disk0.n_faces,
        disk1.n_faces,
        len(seam),
        ratio,
    )
    return SplitResult(
        mesh=cut,
        disk0=disk0,
        disk1=disk1,
        vertex_map0=vertex_map0,
        vertex_map1=vertex_map1,
        seam=seam_array,
        first=first,
        second=second,
        n_original=mesh.n_vertices,
        area_ratio=ratio,
        loop=loop,
    )


def segment_mesh(mesh: HalfedgeMesh, seed: int = DEFAULT_SEED) -> SplitResult:
    """Eigenfunction, zero level loop and split in one call."""
    eigen = first_eigenfunction(mesh, seed=seed)
    return split_mesh(mesh, zero_level_loop(mesh, eigen))


def merge_disks(
    disk0: HalfedgeMesh, disk1: HalfedgeMesh, first: IntArray, second: IntArray
) -> Tuple[HalfedgeMesh, IntArray, IntArray]:
    """Glue two disks along `first[k]` ~ `second[k]` into one closed mesh.

    Returns the merged mesh and the merged id of every vertex of each disk. Disk 0 keeps its
    ids and its seam positions.
    """
    first = np.asarray(first, dtype=np.int64)
    second = np.asarray(second, dtype=np.int64)
    if len(first) != len(second):
        raise ConnectivityMismatchError(
            f"seam sizes differ ({len(first)} vs {len(second)} vertices)"
        )
    map1 = np.full(disk1.n_vertices, -1, dtype=np.int64)
    map1[second] = first
    rest = np.flatnonzero(map1 < 0)
    map1[rest] = disk0.n_vertices + np.arange(len(rest))
    faces = np.vstack([disk0.faces, map1[disk1.faces]])
    positions = None
    if disk0.positions is not None and disk1.positions is not None:
        positions = np.vstack([disk0.positions, disk1.positions[rest]])
    merged = HalfedgeMesh(faces, positions, n_vertices=disk0.n_vertices + len(rest))
    if not merged.is_closed:
        raise ConnectivityMismatchError("disks do not close up along the seam")
    return merged, np.arange(disk0.n_vertices), map1
