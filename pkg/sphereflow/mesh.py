"""Halfedge triangle meshes with an intrinsic edge-length metric.

Halfedges are stored implicitly: face `f` owns halfedges `3f`, `3f + 1` and `3f + 2`, and
halfedge `3f + c` runs from `faces[f, c]` to `faces[f, (c + 1) % 3]`. The corner at slot `c`
of face `f` sits opposite halfedge `next(3f + c)`.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from sphereflow.errors import (
    BoundaryEdgeError,
    ConvergenceError,
    DegenerateGeometryError,
    MeshFormatError,
    MeshIOError,
    NonManifoldError,
    NonTriangularFaceError,
    OrientationError,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

DELAUNAY_SLACK = 1e-12
FLIP_CAP_FACTOR = 50
MESH_FORMATS = ("obj", "off")


def next_halfedge(h: Union[int, IntArray]) -> Union[int, IntArray]:
    return 3 * (h // 3) + (h + 1) % 3


def prev_halfedge(h: Union[int, IntArray]) -> Union[int, IntArray]:
    return 3 * (h // 3) + (h + 2) % 3


class HalfedgeMesh:
    """Connectivity of an oriented, manifold triangle mesh plus optional vertex positions.

    `lengths` holds the current discrete metric (one positive length per edge). It is
    initialized from Euclidean edge lengths whenever positions are available.
    """

    def __init__(
        self,
        faces: Iterable[Iterable[int]] | IntArray,
        positions: Optional[FloatArray] = None,
        n_vertices: Optional[int] = None,
    ) -> None:
        face_array = np.array(faces, dtype=np.int64)
        if face_array.size == 0:
            face_array = face_array.reshape(0, 3)
        if face_array.ndim != 2 or face_array.shape[1] != 3:
            raise NonTriangularFaceError("non-triangular face: faces must have exactly 3 vertices")

        if positions is not None:
            positions = np.array(positions, dtype=np.float64)
            if positions.ndim != 2 or positions.shape[1] not in (2, 3):
                raise ValueError("positions must have shape (V, 2) or (V, 3)")
            if positions.shape[1] == 2:
                positions = np.column_stack([positions, np.zeros(len(positions))])

        if n_vertices is None:
            if positions is not None:
                n_vertices = len(positions)
            else:
                n_vertices = int(face_array.max()) + 1 if face_array.size else 0
        if face_array.size and (face_array.min() < 0 or face_array.max() >= n_vertices):
            raise MeshFormatError("face references a vertex that does not exist")
        if positions is not None and len(positions) != n_vertices:
            raise ValueError("positions do not match the vertex count")

        self.faces: IntArray = face_array
        self.positions: Optional[FloatArray] = positions
        self.n_vertices = int(n_vertices)
        self._build_connectivity()
        self.lengths: Optional[FloatArray] = (
            self.euclidean_lengths() if positions is not None else None
        )

    def _build_connectivity(self) -> None:
        faces = self.faces
        n_he = 3 * len(faces)
        repeated = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if repeated.any():
            raise DegenerateGeometryError(
                "face repeats a vertex", faces=np.flatnonzero(repeated).tolist()
            )

        he_from = faces.reshape(-1)
        he_to = faces[:, [1, 2, 0]].reshape(-1)
        lo = np.minimum(he_from, he_to)
        hi = np.maximum(he_from, he_to)
        keys = lo * max(self.n_vertices, 1) + hi
        unique_keys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)

        if (counts > 2).any():
            bad = int(np.flatnonzero(counts > 2)[0])
            v0, v1 = divmod(int(unique_keys[bad]), max(self.n_vertices, 1))
            raise NonManifoldError(
                f"non-manifold edge ({v0}, {v1}) shared by {int(counts[bad])} faces"
            )

        order = np.argsort(inverse, kind="stable")
        starts = (np.cumsum(counts) - counts).astype(np.int64)
        twin = np.full(n_he, -1, dtype=np.int64)
        paired = counts == 2
        h0 = order[starts[paired]]
        h1 = order[starts[paired] + 1]
        if (he_from[h0] == he_from[h1]).any():
            bad = int(h0[he_from[h0] == he_from[h1]][0])
            raise OrientationError(
                f"inconsistent orientation across edge ({int(he_from[bad])}, {int(he_to[bad])})"
            )
        twin[h0] = h1
        twin[h1] = h0

        boundary_out = np.bincount(he_from[twin < 0], minlength=self.n_vertices)
        if (boundary_out > 1).any():
            v = int(np.flatnonzero(boundary_out > 1)[0])
            raise NonManifoldError(f"non-manifold vertex {v}")

        self.twin: IntArray = twin
        self.edge: IntArray = inverse.astype(np.int64)
        self.edge_halfedge: IntArray = order[starts].astype(np.int64)
        self.n_edges = len(unique_keys)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def origin(self) -> IntArray:
        return self.faces.reshape(-1)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def is_closed(self) -> bool:
        return bool((self.twin >= 0).all())

    def edge_vertices(self) -> IntArray:
        """(E, 2) endpoints of each edge, ordered along its representative halfedge."""
        h = self.edge_halfedge
        return np.column_stack([self.origin[h], self.origin[next_halfedge(h)]])

    def boundary_vertex_mask(self) -> NDArray[np.bool_]:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.origin[self.twin < 0]] = True
        return mask

    def boundary_loops(self) -> list[IntArray]:
        """Boundary loops as vertex sequences with the surface on their left.

        Each loop starts at its smallest vertex id; loops are sorted by that id.
        """
        boundary = np.flatnonzero(self.twin < 0)
        if boundary.size == 0:
            return []
        outgoing = np.full(self.n_vertices, -1, dtype=np.int64)
        outgoing[self.origin[boundary]] = boundary
        seen = np.zeros(self.n_vertices, dtype=bool)
        loops = []
        for start in np.sort(self.origin[boundary]):
            if seen[start]:
                continue
            loop = []
            v = int(start)
            while not seen[v]:
                seen[v] = True
                loop.append(v)
                h = outgoing[v]
                v = int(self.origin[next_halfedge(h)])
            loops.append(np.array(loop, dtype=np.int64))
        return loops

    def genus(self) -> int:
        return (2 - self.euler_characteristic - len(self.boundary_loops())) // 2

    def face_adjacency(self) -> sparse.csr_matrix:
        interior = np.flatnonzero(self.twin >= 0)
        rows = interior // 3
        cols = self.twin[interior] // 3
        data = np.ones(len(interior))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_faces, self.n_faces))

    def vertex_adjacency(self, weights: Optional[FloatArray] = None) -> sparse.csr_matrix:
        """Symmetric vertex graph; with `weights` the shortest parallel edge wins."""
        ev = self.edge_vertices()
        w = np.ones(self.n_edges) if weights is None else np.asarray(weights, dtype=np.float64)
        lo = np.minimum(ev[:, 0], ev[:, 1])
        hi = np.maximum(ev[:, 0], ev[:, 1])
        order = np.lexsort((w, hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        keep = np.ones(len(lo), dtype=bool)
        keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, w = lo[keep], hi[keep], w[keep]
        graph = sparse.coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([lo, hi]), np.concatenate([hi, lo]))),
            shape=(self.n_vertices, self.n_vertices),
        )
        return graph.tocsr()

    def euclidean_lengths(self) -> FloatArray:
        if self.positions is None:
            raise ValueError("mesh has no positions")
        ev = self.edge_vertices()
        return np.linalg.norm(self.positions[ev[:, 1]] - self.positions[ev[:, 0]], axis=1)

    def halfedge_lengths(self, lengths: FloatArray) -> FloatArray:
        """(F, 3) lengths; column c is the length of halfedge 3f + c."""
        return np.asarray(lengths)[self.edge].reshape(-1, 3)

    def copy(self) -> HalfedgeMesh:
        clone = HalfedgeMesh.__new__(HalfedgeMesh)
        clone.faces = self.faces.copy()
        clone.positions = None if self.positions is None else self.positions.copy()
        clone.n_vertices = self.n_vertices
        clone.twin = self.twin.copy()
        clone.edge = self.edge.copy()
        clone.edge_halfedge = self.edge_halfedge.copy()
        clone.n_edges = self.n_edges
        clone.lengths = None if self.lengths is None else self.lengths.copy()
        return clone

    def with_positions(self, positions: FloatArray) -> HalfedgeMesh:
        """Same connectivity with new positions; the metric is recomputed from them."""
        return HalfedgeMesh(self.faces, positions, n_vertices=self.n_vertices)

    def submesh(self, face_mask: NDArray[np.bool_]) -> Tuple[HalfedgeMesh, IntArray]:
        """Keep the selected faces and drop unreferenced vertices.

        Returns the new mesh and `vertex_map`, the original id of every new vertex.
        """
        faces = self.faces[np.asarray(face_mask, dtype=bool)]
        vertex_map, new_faces = np.unique(faces, return_inverse=True)
        new_faces = new_faces.reshape(-1, 3)
        positions = None if self.positions is None else self.positions[vertex_map]
        return HalfedgeMesh(new_faces, positions, n_vertices=len(vertex_map)), vertex_map


def triangle_angles(a: FloatArray, b: FloatArray, c: FloatArray) -> FloatArray:
    """Angle opposite side `a` of triangles with sides (a, b, c), by the half-angle formula."""
    sa = b + c - a
    sb = a + c - b
    sc = a + b - c
    s = a + b + c
    return 2.0 * np.arctan2(np.sqrt(np.maximum(sb * sc, 0.0)), np.sqrt(np.maximum(s * sa, 0.0)))


def check_triangle_inequality(mesh: HalfedgeMesh, lengths: FloatArray) -> None:
    hl = mesh.halfedge_lengths(lengths)
    a, b, c = hl[:, 0], hl[:, 1], hl[:, 2]
    bad = (a >= b + c) | (b >= a + c) | (c >= a + b) | (hl <= 0).any(axis=1)
    if bad.any():
        raise DegenerateGeometryError(
            "triangle inequality violated", faces=np.flatnonzero(bad).tolist()
        )


def corner_angles(mesh: HalfedgeMesh, lengths: FloatArray) -> FloatArray:
    """(F, 3) corner angles; entry (f, c) is the angle at vertex `faces[f, c]`."""
    check_triangle_inequality(mesh, lengths)
    hl = mesh.halfedge_lengths(lengths)
    opposite = hl[:, [1, 2, 0]]
    left = hl[:, [0, 1, 2]]
    right = hl[:, [2, 0, 1]]
    return triangle_angles(opposite, left, right)


def vertex_curvature(mesh: HalfedgeMesh, angles: FloatArray) -> FloatArray:
    total = np.bincount(mesh.origin, weights=angles.reshape(-1), minlength=mesh.n_vertices)
    base = np.where(mesh.boundary_vertex_mask(), math.pi, 2.0 * math.pi)
    return base - total


def gauss_bonnet_residual(mesh: HalfedgeMesh, curvature: FloatArray) -> float:
    return math.fsum(curvature.tolist()) - 2.0 * math.pi * mesh.euler_characteristic


def face_areas(mesh: HalfedgeMesh, lengths: FloatArray) -> FloatArray:
    """Triangle areas of the intrinsic metric (Kahan's stable Heron formula)."""
    hl = np.sort(mesh.halfedge_lengths(lengths), axis=1)[:, ::-1]
    a, b, c = hl[:, 0], hl[:, 1], hl[:, 2]
    product = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(product, 0.0))


def positions_face_areas(positions: FloatArray, faces: IntArray) -> FloatArray:
    p = np.asarray(positions, dtype=np.float64)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    e1 = p[faces[:, 1]] - p[faces[:, 0]]
    e2 = p[faces[:, 2]] - p[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def total_area(mesh: HalfedgeMesh) -> float:
    if mesh.positions is None:
        raise ValueError("mesh has no positions")
    return math.fsum(positions_face_areas(mesh.positions, mesh.faces).tolist())


def vertex_area_weights(mesh: HalfedgeMesh) -> FloatArray:
    """One third of the total area of the faces around each vertex."""
    if mesh.positions is None:
        raise ValueError("vertex area weights need positions")
    areas = positions_face_areas(mesh.positions, mesh.faces)
    if (areas <= 0).any():
        raise DegenerateGeometryError("zero-area face", faces=np.flatnonzero(areas <= 0).tolist())
    return np.bincount(mesh.origin, weights=np.repeat(areas / 3.0, 3), minlength=mesh.n_vertices)


def _opposite_angles(mesh: HalfedgeMesh, lengths: FloatArray, h: int) -> float:
    f = h // 3
    hl = lengths[mesh.edge[3 * f : 3 * f + 3]]
    c = h % 3
    return float(
        triangle_angles(
            np.array([hl[c]]), np.array([hl[(c + 1) % 3]]), np.array([hl[(c + 2) % 3]])
        )[0]
    )


def is_delaunay(mesh: HalfedgeMesh, lengths: FloatArray, edge: int) -> bool:
    h = int(mesh.edge_halfedge[edge])
    t = int(mesh.twin[h])
    if t < 0:
        raise BoundaryEdgeError(f"edge {edge} is a boundary edge")
    return _opposite_angles(mesh, lengths, h) + _opposite_angles(mesh, lengths, t) <= (
        math.pi + DELAUNAY_SLACK
    )


def non_delaunay_edges(mesh: HalfedgeMesh, angles: FloatArray) -> IntArray:
    h = np.flatnonzero(mesh.twin >= 0)
    opposite = angles.reshape(-1)[prev_halfedge(h)]
    total = opposite + angles.reshape(-1)[prev_halfedge(mesh.twin[h])]
    bad = h[(total > math.pi + DELAUNAY_SLACK) & (h < mesh.twin[h])]
    return np.unique(mesh.edge[bad])


def diagonal_switch(mesh: HalfedgeMesh, lengths: FloatArray, edge: int) -> float:
    """Replace `edge` by the other diagonal of its two faces, in place.

    The two triangles are laid out in the plane with the shared edge on the x-axis and the new
    length is read off that layout. Returns the new length.
    """
    h = int(mesh.edge_halfedge[edge])
    t = int(mesh.twin[h])
    if t < 0:
        raise BoundaryEdgeError(f"edge {edge} is a boundary edge")
    f, g = h // 3, t // 3
    hn, hp = int(next_halfedge(h)), int(prev_halfedge(h))
    tn, tp = int(next_halfedge(t)), int(prev_halfedge(t))
    origin = mesh.origin
    i, j = int(origin[h]), int(origin[hn])
    k, m = int(origin[hp]), int(origin[tp])
    if k == m:
        raise DegenerateGeometryError(
            "cannot flip an edge whose faces share all vertices", faces=[f, g]
        )

    l_ij = lengths[edge]
    l_jk, l_ki = lengths[mesh.edge[hn]], lengths[mesh.edge[hp]]
    l_im, l_mj = lengths[mesh.edge[tn]], lengths[mesh.edge[tp]]
    xk = (l_ki**2 - l_jk**2 + l_ij**2) / (2.0 * l_ij)
    yk = math.sqrt(max(l_ki**2 - xk**2, 0.0))
    xm = (l_im**2 - l_mj**2 + l_ij**2) / (2.0 * l_ij)
    ym = -math.sqrt(max(l_im**2 - xm**2, 0.0))
    # i = (0, 0) and j = (l_ij, 0) must lie strictly on opposite sides of the line k-m
    dx, dy = xm - xk, ym - yk
    side_i = dx * (0.0 - yk) - dy * (0.0 - xk)
    side_j = dx * (0.0 - yk) - dy * (l_ij - xk)
    if not side_i * side_j < 0.0:
        raise DegenerateGeometryError(
            f"flattened quad around edge {edge} is not convex", faces=[f, g]
        )
    new_length = math.hypot(dx, dy)

    outer = {
        slot: (int(mesh.edge[old]), int(mesh.twin[old]))
        for slot, old in ((3 * f, hp), (3 * f + 1, tn), (3 * g, tp), (3 * g + 1, hn))
    }
    mesh.faces[f] = (k, i, m)
    mesh.faces[g] = (m, j, k)
    for slot, (e, tw) in outer.items():
        mesh.edge[slot] = e
        mesh.twin[slot] = tw
        mesh.edge_halfedge[e] = slot
        if tw >= 0:
            mesh.twin[tw] = slot
    mesh.edge[3 * f + 2] = edge
    mesh.edge[3 * g + 2] = edge
    mesh.twin[3 * f + 2] = 3 * g + 2
    mesh.twin[3 * g + 2] = 3 * f + 2
    mesh.edge_halfedge[edge] = min(3 * f + 2, 3 * g + 2)
    lengths[edge] = new_length
    return new_length


def make_delaunay(mesh: HalfedgeMesh, lengths: FloatArray) -> int:
    """Flip non-Delaunay edges in place until none remain. Returns the flip count."""
    angles = corner_angles(mesh, lengths)
    stack = deque(int(e) for e in non_delaunay_edges(mesh, angles))
    queued = set(stack)
    cap = FLIP_CAP_FACTOR * max(mesh.n_edges, 1)
    flips = 0
    while stack:
        e = stack.popleft()
        queued.discard(e)
        if mesh.twin[mesh.edge_halfedge[e]] < 0 or is_delaunay(mesh, lengths, e):
            continue
        diagonal_switch(mesh, lengths, e)
        flips += 1
        if flips > cap:
            raise ConvergenceError(
                f"Delaunay flipping exceeded {cap} flips; the metric is degenerate"
            )
        h = int(mesh.edge_halfedge[e])
        for face in (h // 3, int(mesh.twin[h]) // 3):
            for neighbor in mesh.edge[3 * face : 3 * face + 3]:
                neighbor = int(neighbor)
                if neighbor != e and neighbor not in queued:
                    stack.append(neighbor)
                    queued.add(neighbor)
    if flips:
        logger.debug("make_delaunay performed %d flips", flips)
    return flips


def cotan_weights(mesh: HalfedgeMesh, angles: FloatArray) -> FloatArray:
    """Per-edge sum of the cotangents of the corners opposite the edge."""
    corners = np.arange(3 * mesh.n_faces)
    cot = 1.0 / np.tan(angles.reshape(-1))
    return np.bincount(mesh.edge[next_halfedge(corners)], weights=cot, minlength=mesh.n_edges)


def cotan_laplacian(mesh: HalfedgeMesh, angles: FloatArray) -> sparse.csr_matrix:
    """Cotan Laplacian with diagonal Σ w and off-diagonal −w (positive semidefinite)."""
    w = cotan_weights(mesh, angles)
    ev = mesh.edge_vertices()
    i, j = ev[:, 0], ev[:, 1]
    n = mesh.n_vertices
    diagonal = np.bincount(i, weights=w, minlength=n) + np.bincount(j, weights=w, minlength=n)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    data = np.concatenate([-w, -w, diagonal])
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def _resolve_format(path: Path, fmt: Optional[str]) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in MESH_FORMATS:
        raise MeshFormatError(f"unsupported mesh format '{fmt}' for {path}")
    return fmt


def _parse_obj(text: str) -> Tuple[FloatArray, list[list[int]]]:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        try:
            if tokens[0] == "v":
                coords = [float(x) for x in tokens[1:4]]
                if len(coords) < 2:
                    raise ValueError("too few coordinates")
                vertices.append(coords + [0.0] * (3 - len(coords)))
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise NonTriangularFaceError(
                        f"non-triangular face with {len(tokens) - 1} vertices at line {line_number}"
                    )
                face = []
                for token in tokens[1:]:
                    index = int(token.split("/", 1)[0])
                    face.append(index - 1 if index > 0 else len(vertices) + index)
                faces.append(face)
        except ValueError as e:
            raise MeshFormatError(f"cannot parse line {line_number}: {e}") from e
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def _parse_off(text: str) -> Tuple[FloatArray, list[list[int]]]:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].upper().startswith("OFF"):
        raise MeshFormatError("missing OFF header")
    header = lines[0][3:].split()
    body = lines[1:]
    try:
        if not header:
            header, body = body[0].split(), body[1:]
        n_vertices, n_faces = int(header[0]), int(header[1])
        vertices = [[float(x) for x in body[i].split()[:3]] for i in range(n_vertices)]
        faces = []
        for i in range(n_faces):
            tokens = body[n_vertices + i].split()
            count = int(tokens[0])
            if count != 3:
                raise NonTriangularFaceError(f"non-triangular face {i} with {count} vertices")
            faces.append([int(x) for x in tokens[1:4]])
    except (IndexError, ValueError) as e:
        raise MeshFormatError(f"cannot parse OFF file: {e}") from e
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def load_mesh(path: Path, fmt: Optional[str] = None) -> HalfedgeMesh:
    path = Path(path)
    fmt = _resolve_format(path, fmt)
    try:
        text = path.read_text()
    except OSError as e:
        raise MeshIOError(f"cannot read {path}: {e.strerror or e}") from e
    vertices, faces = _parse_obj(text) if fmt == "obj" else _parse_off(text)
    mesh = HalfedgeMesh(np.array(faces, dtype=np.int64).reshape(-1, 3), vertices)
    logger.info(
        "Loaded %s: %d vertices, %d edges, %d faces",
        path.name,
        mesh.n_vertices,
        mesh.n_edges,
        mesh.n_faces,
    )
    return mesh


def _as_xyz(positions: Union[FloatArray, NDArray[np.complex128]]) -> FloatArray:
    p = np.asarray(positions)
    if np.iscomplexobj(p):
        return np.column_stack([p.real, p.imag, np.zeros(len(p))])
    p = p.astype(np.float64)
    if p.ndim == 2 and p.shape[1] == 2:
        return np.column_stack([p, np.zeros(len(p))])
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("positions must be complex (V,), or real (V, 2) or (V, 3)")
    return p


def _format_row(values: Iterable[float]) -> str:
    return " ".join(f"{float(x):.17g}" for x in values)


def write_mesh(
    mesh: HalfedgeMesh,
    path: Path,
    positions: Union[FloatArray, NDArray[np.complex128], None] = None,
    fmt: Optional[str] = None,
) -> Path:
    """Write connectivity and coordinates with 17 significant digits.

    Planar positions (complex or two columns) are written with z = 0.
    """
    path = Path(path)
    fmt = _resolve_format(path, fmt)
    if positions is None:
        positions = mesh.positions
    if positions is None:
        raise ValueError("nothing to write: the mesh has no positions")
    xyz = _as_xyz(positions)
    if len(xyz) != mesh.n_vertices:
        raise ValueError("positions do not match the vertex count")

    if fmt == "obj":
        lines = [f"v {_format_row(p)}" for p in xyz]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    else:
        lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}"]
        lines += [_format_row(p) for p in xyz]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def write_polyline(points: FloatArray, path: Path, closed: bool = True) -> Path:
    path = Path(path)
    xyz = _as_xyz(points)
    lines = [f"v {_format_row(p)}" for p in xyz]
    indices = list(range(1, len(xyz) + 1)) + ([1] if closed else [])
    lines.append("l " + " ".join(str(i) for i in indices))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def write_vertex_values(values: FloatArray, path: Path, column: str = "value") -> Path:
    """CSV with one `vertex,<column>` row per vertex."""
    path = Path(path)
    rows = [f"vertex,{column}"] + [f"{v},{x:.17g}" for v, x in enumerate(np.asarray(values))]
    try:
        path.write_text("\n".join(rows) + "\n")
    except OSError as e:
        raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path
