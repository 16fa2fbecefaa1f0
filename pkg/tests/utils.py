import numpy as np

from sphereflow.mesh import HalfedgeMesh


def torus(rows=8, segments=12, major=2.0, minor=0.5):
    theta, phi = np.meshgrid(
        np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False),
        np.linspace(0.0, 2.0 * np.pi, rows, endpoint=False),
    )
    ring = major + minor * np.cos(phi)
    positions = np.column_stack(
        [
            (ring * np.cos(theta)).ravel(),
            (ring * np.sin(theta)).ravel(),
            (minor * np.sin(phi)).ravel(),
        ]
    )
    faces = []
    for r in range(rows):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            c = ((r + 1) % rows) * segments + s
            d = ((r + 1) % rows) * segments + (s + 1) % segments
            faces += [(a, b, d), (a, d, c)]
    return HalfedgeMesh(faces, positions)


def read_rows(path):
    return path.read_text().splitlines()
