"""Procedural meshes used by the `generate` command and the test-suite."""

from __future__ import annotations

import math

import numpy as np

from sphereflow.mesh import FloatArray, HalfedgeMesh, IntArray

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
_ICOSAHEDRON_VERTICES = np.array(
    [
        (-1, _GOLDEN, 0),
        (1, _GOLDEN, 0),
        (-1, -_GOLDEN, 0),
        (1, -_GOLDEN, 0),
        (0, -1, _GOLDEN),
        (0, 1, _GOLDEN),
        (0, -1, -_GOLDEN),
        (0, 1, -_GOLDEN),
        (_GOLDEN, 0, -1),
        (_GOLDEN, 0, 1),
        (-_GOLDEN, 0, -1),
        (-_GOLDEN, 0, 1),
    ],
    dtype=np.float64,
)
_ICOSAHEDRON_FACES = np.array(
    [
        (0, 11, 5),
        (0, 5, 1),
        (0, 1, 7),
        (0, 7, 10),
        (0, 10, 11),
        (1, 5, 9),
        (5, 11, 4),
        (11, 10, 2),
        (10, 7, 6),
        (7, 1, 8),
        (3, 9, 4),
        (3, 4, 2),
        (3, 2, 6),
        (3, 6, 8),
        (3, 8, 9),
        (4, 9, 5),
        (2, 4, 11),
        (6, 2, 10),
        (8, 6, 7),
        (9, 8, 1),
    ],
    dtype=np.int64,
)


def tetrahedron() -> HalfedgeMesh:
    """Regular tetrahedron with unit edges."""
    positions = np.array(
        [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=np.float64
    ) / (2.0 * math.sqrt(2.0))
    faces = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return HalfedgeMesh(faces, positions)


def octahedron() -> HalfedgeMesh:
    positions = np.array(
        [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)], dtype=np.float64
    )
    faces = [
        (0, 2, 4),
        (2, 1, 4),
        (1, 3, 4),
        (3, 0, 4),
        (2, 0, 5),
        (1, 2, 5),
        (3, 1, 5),
        (0, 3, 5),
    ]
    return HalfedgeMesh(faces, positions)


def _subdivide(vertices: FloatArray, faces: IntArray) -> tuple[FloatArray, IntArray]:
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique_edges, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(3, -1)
    midpoints = 0.5 * (vertices[unique_edges[:, 0]] + vertices[unique_edges[:, 1]])
    offset = len(vertices)
    ab, bc, ca = (inverse[k] + offset for k in range(3))
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.column_stack([a, ab, ca]),
            np.column_stack([b, bc, ab]),
            np.column_stack([c, ca, bc]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    return np.vstack([vertices, midpoints]), new_faces


def icosphere(subdivisions: int = 3) -> HalfedgeMesh:
    """Unit sphere from a subdivided icosahedron; 20·4^subdivisions faces."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be non-negative")
    vertices = _ICOSAHEDRON_VERTICES / np.linalg.norm(_ICOSAHEDRON_VERTICES, axis=1)[:, None]
    faces = _ICOSAHEDRON_FACES.copy()
    for _ in range(subdivisions):
        vertices, faces = _subdivide(vertices, faces)
        vertices = vertices / np.linalg.norm(vertices, axis=1)[:, None]
    return HalfedgeMesh(faces, vertices)


def ellipsoid(
    a: float = 1.0, b: float = 1.0, c: float = 2.0, subdivisions: int = 3
) -> HalfedgeMesh:
    sphere = icosphere(subdivisions)
    assert sphere.positions is not None
    return sphere.with_positions(sphere.positions * np.array([a, b, c]))


def capped_sphere(cap_height: float = 0.8, rows: int = 24, segments: int = 64) -> HalfedgeMesh:
    """Unit-sphere band |z| <= cap_height, i.e. a sphere with both polar caps removed."""
    latitude = np.linspace(-math.asin(cap_height), math.asin(cap_height), rows + 1)
    theta = 2 * math.pi * np.arange(segments) / segments
    positions = np.array(
        [
            (math.cos(phi) * math.cos(t), math.cos(phi) * math.sin(t), math.sin(phi))
            for phi in latitude
            for t in theta
        ]
    )
    return HalfedgeMesh(_band_faces(rows, segments), positions)


def _band_faces(rows: int, segments: int) -> list[tuple[int, int, int]]:
    faces = []
    for r in range(rows):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            faces.extend([(a, b, b + segments), (a, b + segments, a + segments)])
    return faces


def _ring_strip(
    inner: IntArray, inner_angles: FloatArray, outer: IntArray, outer_angles: FloatArray
) -> list[tuple[int, int, int]]:
    # merge two closed rings by angle; a single-vertex inner ring becomes a fan
    faces = []
    n_in, n_out = len(inner), len(outer)
    i = 1 if n_in == 1 else 0
    j = 0
    while i < n_in or j < n_out:
        next_inner = inner_angles[(i + 1) % n_in] + (2 * math.pi if i + 1 >= n_in else 0.0)
        next_outer = outer_angles[(j + 1) % n_out] + (2 * math.pi if j + 1 >= n_out else 0.0)
        if j < n_out and (i >= n_in or next_outer <= next_inner):
            faces.append((int(inner[i % n_in]), int(outer[j]), int(outer[(j + 1) % n_out])))
            j += 1
        else:
            faces.append((int(inner[i]), int(outer[j % n_out]), int(inner[(i + 1) % n_in])))
            i += 1
    return faces


def _ring_mesh(radii: FloatArray, counts: list[int]) -> HalfedgeMesh:
    positions = []
    rings = []
    angles = []
    for radius, count in zip(radii, counts):
        theta = 2 * math.pi * np.arange(count) / count
        start = len(positions)
        positions.extend(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]))
        rings.append(np.arange(start, start + count))
        angles.append(theta)
    faces: list[tuple[int, int, int]] = []
    for k in range(1, len(rings)):
        faces.extend(_ring_strip(rings[k - 1], angles[k - 1], rings[k], angles[k]))
    return HalfedgeMesh(faces, np.array(positions))


def flat_disk(rings: int = 20) -> HalfedgeMesh:
    """Planar unit disk: a center vertex and `rings` concentric rings with 6k vertices each.

    Has 6·rings² faces.
    """
    if rings < 1:
        raise ValueError("a disk needs at least one ring")
    radii = np.arange(rings + 1) / rings
    return _ring_mesh(radii, [1] + [6 * k for k in range(1, rings + 1)])


def flat_annulus(inner_radius: float = 0.5, rings: int = 8, segments: int = 48) -> HalfedgeMesh:
    if not 0.0 < inner_radius < 1.0:
        raise ValueError("inner_radius must be in (0, 1)")
    radii = np.linspace(inner_radius, 1.0, rings + 1)
    return _ring_mesh(radii, [segments] * (rings + 1))


def flat_cylinder(height: float = 1.0, rows: int = 16, segments: int = 64) -> HalfedgeMesh:
    """Open prism whose polygonal cross-section has perimeter exactly 2π."""
    radius = math.pi / (segments * math.sin(math.pi / segments))
    theta = 2 * math.pi * np.arange(segments) / segments
    z = np.linspace(0.0, height, rows + 1)
    positions = np.array(
        [(radius * math.cos(t), radius * math.sin(t), zz) for zz in z for t in theta]
    )
    return HalfedgeMesh(_band_faces(rows, segments), positions)


def square_grid(n: int = 8) -> HalfedgeMesh:
    """Unit square with n×n cells, each split along the diagonal from its lower-left corner."""
    x, y = np.meshgrid(np.arange(n + 1) / n, np.arange(n + 1) / n)
    positions = np.column_stack([x.ravel(), y.ravel()])
    faces = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            faces.extend([(a, b, c), (a, c, d)])
    return HalfedgeMesh(faces, positions)


def hexagon_grid(radius: int = 3) -> HalfedgeMesh:
    """Equilateral triangles with unit edges filling a hexagon `radius` edges wide."""
    index = {}
    positions = []
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            if abs(a + b) <= radius:
                index[(a, b)] = len(positions)
                positions.append((a + 0.5 * b, 0.5 * math.sqrt(3.0) * b))
    faces = []
    for (a, b), v in index.items():
        up = ((a + 1, b), (a, b + 1))
        down = ((a + 1, b - 1), (a + 1, b))
        for p, q in (up, down):
            if p in index and q in index:
                faces.append((v, index[p], index[q]))
    return HalfedgeMesh(faces, np.array(positions))
