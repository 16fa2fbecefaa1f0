"""Extended-plane arithmetic, Möbius transforms, zipper welding of two conformal disks, and the
conformal spherical map built from them."""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, MutableMapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from sphereflow._config import DEFAULT_EPS_YAMABE, DEFAULT_SEED
from sphereflow.errors import (
    ConvergenceError,
    MeshFormatError,
    MeshIOError,
    TopologyError,
    UndefinedOperationError,
    WeldingError,
    stage,
)
from sphereflow.flow import PlanarEmbedding, RiemannMap, riemann_map
from sphereflow.mesh import FloatArray, HalfedgeMesh, IntArray, total_area, vertex_area_weights
from sphereflow.segment import SplitResult, merge_disks, segment_mesh

logger = logging.getLogger(__name__)

ComplexArray = NDArray[np.complex128]

INFINITY = complex(math.inf, 0.0)
SEAM_TOLERANCE = 1e-6
BRANCH_TOLERANCE = 1e-9
DISK_TOLERANCE = 1e-3
CENTER_TOLERANCE = 1e-6
MAX_CENTERING_ITERATIONS = 1000


class ExtendedComplex:
    """A point of the Riemann sphere: a finite complex number or ∞."""

    __slots__ = ("value", "infinite")

    def __init__(self, value: Union[complex, float, ExtendedComplex] = 0.0) -> None:
        if isinstance(value, ExtendedComplex):
            self.value, self.infinite = value.value, value.infinite
            return
        value = complex(value)
        self.infinite = cmath.isinf(value)
        self.value = 0j if self.infinite else value
        if cmath.isnan(value):
            raise UndefinedOperationError("NaN is not a point of the extended plane")

    @classmethod
    def infinity(cls) -> ExtendedComplex:
        return cls(INFINITY)

    def __complex__(self) -> complex:
        return INFINITY if self.infinite else self.value

    def __repr__(self) -> str:
        return "ExtendedComplex(inf)" if self.infinite else f"ExtendedComplex({self.value!r})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, (ExtendedComplex, complex, float, int)):
            return NotImplemented
        other = ExtendedComplex(other)
        if self.infinite or other.infinite:
            return self.infinite and other.infinite
        return self.value == other.value

    def __hash__(self) -> int:
        return hash(("inf",) if self.infinite else self.value)

    def isclose(self, other: Union[complex, ExtendedComplex], tol: float = 1e-12) -> bool:
        other = ExtendedComplex(other)
        if self.infinite or other.infinite:
            return self.infinite and other.infinite
        return abs(self.value - other.value) <= tol * max(1.0, abs(other.value))

    def __neg__(self) -> ExtendedComplex:
        return self if self.infinite else ExtendedComplex(-self.value)

    def __add__(self, other: Union[complex, ExtendedComplex]) -> ExtendedComplex:
        other = ExtendedComplex(other)
        if self.infinite and other.infinite:
            raise UndefinedOperationError("∞ + ∞ is undefined")
        if self.infinite or other.infinite:
            return ExtendedComplex.infinity()
        return ExtendedComplex(self.value + other.value)

    __radd__ = __add__

    def __sub__(self, other: Union[complex, ExtendedComplex]) -> ExtendedComplex:
        other = ExtendedComplex(other)
        if self.infinite and other.infinite:
            raise UndefinedOperationError("∞ − ∞ is undefined")
        return self + (-other)

    def __rsub__(self, other: Union[complex, ExtendedComplex]) -> ExtendedComplex:
        return ExtendedComplex(other) - self

    def __mul__(self, other: Union[complex, ExtendedComplex]) -> ExtendedComplex:
        other = ExtendedComplex(other)
        if self.infinite or other.infinite:
            if (not self.infinite and self.value == 0) or (not other.infinite and other.value == 0):
                raise UndefinedOperationError("∞ · 0 is undefined")
            return ExtendedComplex.infinity()
        return ExtendedComplex(self.value * other.value)

    __rmul__ = __mul__

    def reciprocal(self) -> ExtendedComplex:
        if self.infinite:
            return ExtendedComplex(0.0)
        if self.value == 0:
            return ExtendedComplex.infinity()
        return ExtendedComplex(1.0 / self.value)

    def __truediv__(self, other: Union[complex, ExtendedComplex]) -> ExtendedComplex:
        other = ExtendedComplex(other)
        if self.infinite and other.infinite:
            raise UndefinedOperationError("∞ / ∞ is undefined")
        if not self.infinite and self.value == 0 and not other.infinite and other.value == 0:
            raise UndefinedOperationError("0 / 0 is undefined")
        if other.infinite:
            return ExtendedComplex(0.0)
        if self.infinite:
            return self
        return self * other.reciprocal()

    def __rtruediv__(self, other: Union[complex, ExtendedComplex]) -> ExtendedComplex:
        return ExtendedComplex(other) / self


Point = Union[complex, float, ExtendedComplex]


class MobiusTransform:
    """z ↦ (az + b) / (cz + d), stored with ad − bc = 1."""

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a: complex, b: complex, c: complex, d: complex) -> None:
        det = complex(a) * complex(d) - complex(b) * complex(c)
        scale = max(abs(a), abs(b), abs(c), abs(d))
        if scale == 0 or abs(det) <= 1e-14 * scale**2:
            raise UndefinedOperationError("degenerate Möbius transform (ad − bc = 0)")
        root = cmath.sqrt(det)
        self.a, self.b, self.c, self.d = (complex(x) / root for x in (a, b, c, d))

    @classmethod
    def identity(cls) -> MobiusTransform:
        return cls(1, 0, 0, 1)

    @classmethod
    def three_point(
        cls, source: Sequence[Point], target: Sequence[Point]
    ) -> MobiusTransform:
        """The unique transform sending source[k] to target[k] for k = 0, 1, 2."""
        to_standard = _cross_ratio_map(source)
        from_standard = _cross_ratio_map(target).inverse()
        transform = from_standard @ to_standard
        for z, w in zip(source, target):
            image = transform(z)
            if not image.isclose(ExtendedComplex(w), tol=1e-9):
                raise UndefinedOperationError(f"three-point transform misses {w} (got {image})")
        return transform

    def matrix(self) -> NDArray[np.complex128]:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def __repr__(self) -> str:
        return f"MobiusTransform({self.a:.6g}, {self.b:.6g}, {self.c:.6g}, {self.d:.6g})"

    def __call__(self, z: Point) -> ExtendedComplex:
        z = ExtendedComplex(z)
        if z.infinite:
            return ExtendedComplex(self.a) / ExtendedComplex(self.c)
        return (self.a * z + self.b) / (self.c * z + self.d)

    def apply(self, z: ComplexArray) -> ComplexArray:
        """Vectorized application; ∞ is encoded as complex(inf, 0) on input and output."""
        z = np.asarray(z, dtype=np.complex128)
        infinite = np.isinf(z)
        finite = np.where(infinite, 0.0, z)
        numerator = self.a * finite + self.b
        denominator = self.c * finite + self.d
        pole = denominator == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = numerator / np.where(pole, 1.0, denominator)
        out[pole] = INFINITY
        out[infinite] = INFINITY if self.c == 0 else self.a / self.c
        return out

    def compose(self, other: MobiusTransform) -> MobiusTransform:
        """self ∘ other."""
        product = self.matrix() @ other.matrix()
        return MobiusTransform(*product.ravel())

    __matmul__ = compose

    def inverse(self) -> MobiusTransform:
        return MobiusTransform(self.d, -self.b, -self.c, self.a)

    def isclose(self, other: MobiusTransform, tol: float = 1e-12) -> bool:
        # a matrix and its negative define the same transform
        difference = self.matrix()
        return bool(
            np.abs(difference - other.matrix()).max() <= tol
            or np.abs(difference + other.matrix()).max() <= tol
        )


def _cross_ratio_map(points: Sequence[Point]) -> MobiusTransform:
    """Transform sending points to (0, 1, ∞)."""
    z1, z2, z3 = (ExtendedComplex(p) for p in points)
    if z1 == z2 or z2 == z3 or z1 == z3:
        raise UndefinedOperationError("three-point transform needs distinct points")
    if z1.infinite:
        return MobiusTransform(0, z2.value - z3.value, 1, -z3.value)
    if z2.infinite:
        return MobiusTransform(1, -z1.value, 1, -z3.value)
    if z3.infinite:
        return MobiusTransform(1, -z1.value, 0, z2.value - z1.value)
    return MobiusTransform(
        z2.value - z3.value,
        -z1.value * (z2.value - z3.value),
        z2.value - z1.value,
        -z3.value * (z2.value - z1.value),
    )


TO_DISK = MobiusTransform(1, -1j, 1, 1j)
TO_HALF_PLANE = MobiusTransform(1j, 1j, -1, 1)


def disk_half_plane(z: Point, direction: str = "to_disk") -> ExtendedComplex:
    """w = (z − i)/(z + i) maps the upper half plane onto the unit disk; `to_half_plane`
    applies the inverse z = i(1 + w)/(1 − w)."""
    if direction == "to_disk":
        return TO_DISK(z)
    if direction == "to_half_plane":
        return TO_HALF_PLANE(z)
    raise ValueError(f"unknown direction {direction!r}")


def _upper(z: ComplexArray, on_axis: Optional[NDArray[np.bool_]] = None) -> ComplexArray:
    """Snap rounding noise onto the closed upper half plane with a positive-zero imaginary part.

    Points flagged `on_axis` are forced onto the real axis. Finite points clearly below the axis
    mean a branch was lost.
    """
    z = np.asarray(z, dtype=np.complex128)
    finite = ~np.isinf(z)
    imag = np.where(finite, z.imag, 0.0)
    below = finite & (imag < -BRANCH_TOLERANCE * np.maximum(1.0, np.abs(np.where(finite, z, 0))))
    if on_axis is not None:
        below &= ~on_axis
    if below.any():
        raise WeldingError(
            f"{int(below.sum())} point(s) crossed the slit into the lower half plane"
        )
    keep = imag > 0
    if on_axis is not None:
        keep &= ~on_axis
    out = np.empty_like(z)
    out.real = z.real
    out.imag = np.where(keep, imag, 0.0)
    out[~finite] = INFINITY
    return out


def zip_map(w: ComplexArray) -> ComplexArray:
    """√(w² − 1) on the closed upper half plane, onto H minus the slit [0, i].

    The two halves of [−1, 1] are glued: ±x land on the same point of the slit.
    """
    w = _upper(w)
    infinite = np.isinf(w)
    finite = np.where(infinite, 0.0, w)
    out = np.sqrt(finite - 1.0) * np.sqrt(finite + 1.0)
    out[infinite] = INFINITY
    return out


def unzip_map(z: Union[ComplexArray, complex]) -> ComplexArray:
    """ζ(z) = √(z² + 1), the inverse of `zip_map`: opens the slit [0, i] onto [−1, 1].

    The branch keeps the image in the closed upper half plane and is continuous from above,
    so ζ(i) = 0, ζ(1) = √2 and ζ(−1) = −√2.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    infinite = np.isinf(z)
    finite = np.where(infinite, 0.0, z)
    root = np.sqrt(finite * finite + 1.0)
    flip = (root.imag < 0) | ((root.imag == 0) & (finite.real < 0))
    root = np.where(flip, -root, root)
    root[infinite] = INFINITY
    return root


@dataclass
class WeldingSignature:
    """Seam correspondence `first[k]` (vertex of disk 1) ~ `second[k]` (vertex of disk 2).

    `first` runs counterclockwise around disk 1; `second` runs clockwise around disk 2.
    """

    first: IntArray
    second: IntArray

    def __post_init__(self) -> None:
        self.first = np.asarray(self.first, dtype=np.int64)
        self.second = np.asarray(self.second, dtype=np.int64)
        if len(self.first) != len(self.second):
            raise WeldingError("welding signature sides have different lengths")
        if len(np.unique(self.first)) != len(self.first) or len(np.unique(self.second)) != len(
            self.second
        ):
            raise WeldingError("welding signature is not a bijection")
        if len(self.first) < 4:
            raise WeldingError(f"welding needs at least 4 seam vertices, got {len(self.first)}")

    def __len__(self) -> int:
        return len(self.first)

    @classmethod
    def from_split(cls, split: SplitResult) -> WeldingSignature:
        return cls(split.first, split.second)

    def write(self, path: Path) -> Path:
        """CSV with one `first,second` row per seam vertex, in seam order."""
        path = Path(path)
        rows = ["first,second"] + [f"{a},{b}" for a, b in zip(self.first, self.second)]
        try:
            path.write_text("\n".join(rows) + "\n")
        except OSError as e:
            raise MeshIOError(f"cannot write {path}: {e.strerror or e}") from e
        return path

    @classmethod
    def load(cls, path: Path) -> WeldingSignature:
        path = Path(path)
        try:
            lines = path.read_text().split()
        except OSError as e:
            raise MeshIOError(f"cannot read {path}: {e.strerror or e}") from e
        if not lines or lines[0] != "first,second":
            raise MeshFormatError(f"{path} is not a welding signature")
        try:
            pairs = np.array([line.split(",") for line in lines[1:]], dtype=np.int64)
        except ValueError as e:
            raise MeshFormatError(f"cannot parse welding signature {path}: {e}") from e
        pairs = pairs.reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    def validate(self, disk1: HalfedgeMesh, disk2: HalfedgeMesh) -> None:
        sides = ((disk1, self.first, "first"), (disk2, self.second[::-1], "second"))
        for disk, side, name in sides:
            loops = disk.boundary_loops()
            if len(loops) != 1 or disk.euler_characteristic != 1:
                raise TopologyError(
                    f"welding needs two topological disks, the {name} has "
                    f"{len(loops)} boundary loop(s) and Euler characteristic "
                    f"{disk.euler_characteristic}"
                )
            boundary = loops[0]
            if len(boundary) != len(side) or side[0] not in boundary:
                raise WeldingError(f"{name} seam does not cover the disk boundary")
            offset = int(np.flatnonzero(boundary == side[0])[0])
            if not np.array_equal(np.roll(boundary, -offset), side):
                raise WeldingError(f"{name} seam is out of order with the disk boundary")


@dataclass
class WeldedEmbedding:
    """Planar positions of the welded sphere; exactly one vertex sits at ∞."""

    mesh: HalfedgeMesh
    positions: ComplexArray
    infinity_vertex: int
    seam_error: float
    disk1_map: IntArray
    disk2_map: IntArray


def _boundary_on_circle(embedding: PlanarEmbedding, boundary: IntArray) -> ComplexArray:
    z = np.array(embedding.positions, dtype=np.complex128)
    radius = np.abs(z)
    if radius.max() > 1.0 + DISK_TOLERANCE:
        raise WeldingError(f"disk embedding leaves the unit disk (|z| = {radius.max():.6f})")
    inside = radius >= 1.0
    z[inside] *= (1.0 - 1e-12) / radius[inside]
    z[boundary] /= np.abs(z[boundary])
    return z


def _disk_to_half_plane(
    z: ComplexArray, boundary: IntArray, infinity: int, zero: int
) -> ComplexArray:
    # rotate `infinity` onto 1, open the disk onto H, translate `zero` onto the origin
    rotation = MobiusTransform(np.conj(z[infinity]), 0, 0, 1)
    half = (TO_HALF_PLANE @ rotation).apply(z)
    half[infinity] = INFINITY
    on_axis = np.zeros(len(z), dtype=bool)
    on_axis[boundary] = True
    on_axis[infinity] = False
    half = _upper(half, on_axis)
    shift = half[zero].real
    half[~np.isinf(half)] -= shift
    half[zero] = 0.0
    return _upper(half, on_axis)


def zipper_weld(
    disk1: PlanarEmbedding, disk2: PlanarEmbedding, signature: WeldingSignature
) -> WeldedEmbedding:
    """Weld two unit-disk embeddings along `signature` into one planar embedding of the sphere.

    Disk 1 ends up inside the welded Jordan curve and disk 2 outside it, with the vertex of
    disk 2 nearest its disk center sent to ∞.
    """
    signature.validate(disk1.mesh, disk2.mesh)
    first, second = signature.first, signature.second
    n = len(signature)
    n1 = disk1.mesh.n_vertices

    z1 = _boundary_on_circle(disk1, first)
    z2 = _boundary_on_circle(disk2, second)
    h1 = _disk_to_half_plane(z1, first, int(first[0]), int(first[1]))
    h2 = _disk_to_half_plane(z2, second, int(second[0]), int(second[1]))

    # glue the arc between seam pairs 0 and 1 along the positive imaginary axis
    with np.errstate(invalid="ignore"):
        w = np.concatenate([np.sqrt(h1), 1j * np.sqrt(h2)])
    w[~np.isfinite(np.concatenate([h1, h2]))] = INFINITY
    seam1, seam2 = first, n1 + second
    w[seam2[1]] = w[seam1[1]] = 0.0

    pending = np.zeros(len(w), dtype=bool)
    pending[seam1[2:]] = pending[seam2[2:]] = True
    pending[seam1[0]] = pending[seam2[0]] = True
    for k in range(2, n):
        w = _upper(w, pending)
        a, b = w[seam1[k]].real, w[seam2[k]].real
        step = MobiusTransform.three_point((b, 0.0, a), (-1.0, 0.0, 1.0))
        w = step.apply(w)
        w[seam1[k]], w[seam2[k]] = 1.0, -1.0
        w = _upper(w, pending)
        w = zip_map(w)
        w[seam1[k]] = w[seam2[k]] = 0.0
        pending[seam1[k]] = pending[seam2[k]] = False
        glued = np.concatenate([seam1[:k], seam2[:k]])
        glued = glued[~np.isinf(w[glued])]
        if (w[glued].imag < -BRANCH_TOLERANCE).any():
            raise WeldingError(f"glued seam vertices left the upper half plane at step {k}")
        logger.debug("zipper step %d/%d", k, n - 1)

    # close the last arc: send pair 0 to ∞ fixing 0, then fold H onto the plane
    end = w[seam1[0]]
    if not np.isinf(end):
        w = MobiusTransform(end.real, 0, -1, end.real).apply(_upper(w, pending))
    w[seam1[0]] = w[seam2[0]] = INFINITY
    w = _upper(w, pending)
    w = np.where(np.isinf(w), INFINITY, w * w)

    d1, d2 = w[:n1], w[n1:]
    both_infinite = np.isinf(d1[first]) & np.isinf(d2[second])
    with np.errstate(invalid="ignore"):
        mismatch = np.where(both_infinite, 0.0, d1[first] - d2[second])
    seam_error = float(np.abs(mismatch).max())
    if not seam_error <= SEAM_TOLERANCE:
        raise WeldingError(f"welded seam vertices disagree by {seam_error:.3e}")

    merged, map1, map2 = merge_disks(disk1.mesh, disk2.mesh, first, second)
    positions = np.empty(merged.n_vertices, dtype=np.complex128)
    positions[map2] = d2
    positions[map1] = d1

    interior2 = np.setdiff1d(np.arange(disk2.mesh.n_vertices), second)
    if interior2.size == 0:
        raise WeldingError("the second disk has no interior vertex")
    center = int(interior2[np.argmin(np.abs(disk2.positions[interior2]))])
    far = int(map2[center])
    positions = MobiusTransform(0, 1, 1, -positions[far]).apply(positions)
    positions[far] = INFINITY
    logger.info("welded %d seam vertices; vertex %d sent to infinity", n, far)
    return WeldedEmbedding(merged, positions, far, seam_error, map1, map2)


def stereographic(z: Union[ComplexArray, complex]) -> FloatArray:
    """(x, y) ↦ (2x, 2y, x² + y² − 1) / (x² + y² + 1); ∞ ↦ (0, 0, 1)."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    infinite = np.isinf(z)
    finite = np.where(infinite, 0.0, z)
    r = np.abs(finite)
    small = r <= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(small, 1.0, 1.0 / r)
        unit = np.where(small, finite, finite / np.where(r == 0, 1.0, r))
        # for |z| > 1 rewrite in terms of s = 1/|z| to avoid overflow
        scale = np.where(small, 2.0 / (1.0 + r * r), 2.0 * s / (1.0 + s * s))
        height = np.where(small, (r * r - 1.0) / (r * r + 1.0), (1.0 - s * s) / (1.0 + s * s))
    xy = scale * unit
    out = np.column_stack([xy.real, xy.imag, height])
    out[infinite] = (0.0, 0.0, 1.0)
    return out


def inverse_stereographic(points: FloatArray) -> ComplexArray:
    """(x, y, z) ↦ (x + iy) / (1 − z); the north pole maps to ∞."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    denominator = 1.0 - p[:, 2]
    north = denominator <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (p[:, 0] + 1j * p[:, 1]) / np.where(north, 1.0, denominator)
    out[north] = INFINITY
    return out


def plane_to_sphere(z: Union[ComplexArray, complex]) -> FloatArray:
    """Stereographic lift of the conjugate, so counterclockwise planar triangles face outward."""
    return stereographic(np.conj(np.atleast_1d(np.asarray(z, dtype=np.complex128))))


def sphere_to_plane(points: FloatArray) -> ComplexArray:
    z = inverse_stereographic(points)
    infinite = np.isinf(z)
    z = np.conj(z)
    z[infinite] = INFINITY
    return z


@dataclass
class SphericalEmbedding:
    """Unit vector per vertex of `mesh`."""

    mesh: HalfedgeMesh
    positions: FloatArray
    pipeline: Optional[ConformalPipeline] = None
    timings: dict[str, float] = field(default_factory=dict)

    def signed_areas(self) -> FloatArray:
        return spherical_signed_areas(self.positions, self.mesh.faces)

    def flipped_faces(self) -> IntArray:
        return np.flatnonzero(self.signed_areas() <= 0.0)

    def total_area(self) -> float:
        return math.fsum(self.signed_areas().tolist())

    def norm_error(self) -> float:
        return float(np.abs(np.linalg.norm(self.positions, axis=1) - 1.0).max())


@dataclass
class ConformalPipeline:
    """Intermediate results of `conformal_spherical_map`, kept for export and inspection."""

    split: SplitResult
    riemann: Tuple[RiemannMap, RiemannMap]
    welded: WeldedEmbedding
    scale: float
    refined_positions: FloatArray
    centering: MobiusCentering


def spherical_signed_areas(positions: FloatArray, faces: IntArray) -> FloatArray:
    """Signed areas of the geodesic triangles spanned by unit vectors."""
    a, b, c = (positions[faces[:, k]] for k in range(3))
    triple = np.einsum("ij,ij->i", a, np.cross(b, c))
    denominator = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c)
    denominator += np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(triple, denominator)


def _ball_mobius(points: FloatArray, center: FloatArray) -> FloatArray:
    """Conformal automorphism of the sphere induced by the ball isometry sending `center` to 0."""
    c2 = float(center @ center)
    diff = points - center
    d2 = np.einsum("ij,ij->i", diff, diff)
    image = ((1.0 - c2) * diff - d2[:, None] * center) / d2[:, None]
    return image / np.linalg.norm(image, axis=1)[:, None]


@dataclass
class MobiusCentering:
    iterations: int
    center_norm: float
    rotation: Optional[FloatArray]
    trace: list[dict[str, Any]] = field(default_factory=list)


def _mass_center(points: FloatArray, weights: FloatArray) -> FloatArray:
    return (weights[:, None] * points).sum(axis=0) / weights.sum()


def landmark_rotation(top: FloatArray, front: FloatArray) -> FloatArray:
    """Rotation matrix taking `top` to (0, 0, 1) and `front` into the half-plane y = 0, x > 0."""
    e3 = top / np.linalg.norm(top)
    e1 = front - (front @ e3) * e3
    norm = np.linalg.norm(e1)
    if norm < 1e-12:
        raise WeldingError("landmarks are antipodal or coincide on the sphere")
    e1 /= norm
    return np.vstack([e1, np.cross(e3, e1), e3])


def mobius_normalize(
    positions: FloatArray,
    weights: FloatArray,
    landmarks: Optional[Tuple[int, int]] = None,
    tol: float = CENTER_TOLERANCE,
    max_iter: int = MAX_CENTERING_ITERATIONS,
) -> Tuple[FloatArray, MobiusCentering]:
    """Move the weighted mass center to the origin with sphere automorphisms, then rotate the
    landmarks into place.

    Each iteration applies the ball isometry sending the current mass center to the origin,
    halving the step whenever the center would move farther out.
    """
    points = np.asarray(positions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    center = _mass_center(points, weights)
    norm = float(np.linalg.norm(center))
    trace = [{"iteration": 0, "center_norm": norm, "step": 0.0}]
    iteration = 0
    while norm >= tol:
        if iteration >= max_iter:
            raise ConvergenceError(
                "Möbius centering did not converge", residual=norm, iterations=iteration
            )
        step = 1.0
        while True:
            candidate = _ball_mobius(points, step * center)
            new_center = _mass_center(candidate, weights)
            new_norm = float(np.linalg.norm(new_center))
            if new_norm < norm:
                break
            step *= 0.5
            if step < 1e-12:
                raise ConvergenceError(
                    "Möbius centering stalled", residual=norm, iterations=iteration
                )
        points, center, norm = candidate, new_center, new_norm
        iteration += 1
        trace.append({"iteration": iteration, "center_norm": norm, "step": step})
        logger.debug("centering iteration %d: |center| %.3e", iteration, norm)

    rotation = None
    if landmarks is not None:
        top, front = landmarks
        if top == front:
            raise ValueError("landmark vertices must be distinct")
        rotation = landmark_rotation(points[top], points[front])
        points = points @ rotation.T
        points[top] = (0.0, 0.0, 1.0)
    points = points / np.linalg.norm(points, axis=1)[:, None]
    return points, MobiusCentering(iteration, norm, rotation, trace)


def conformal_spherical_map(
    mesh: HalfedgeMesh,
    landmarks: Optional[Tuple[int, int]] = None,
    eps_yamabe: float = DEFAULT_EPS_YAMABE,
    seed: int = DEFAULT_SEED,
    timings: Optional[MutableMapping[str, float]] = None,
) -> SphericalEmbedding:
    """Angle-preserving map of a closed genus-0 mesh onto the unit sphere.

    The surface is rescaled to area 4π, cut into two disks, each disk is mapped onto the unit
    disk, the disks are welded, lifted to the sphere and centered.
    """
    if not mesh.is_closed or mesh.genus() != 0:
        raise TopologyError(
            "the spherical map needs a closed genus-0 mesh, got Euler characteristic "
            f"{mesh.euler_characteristic} with {len(mesh.boundary_loops())} boundary loop(s)"
        )
    if mesh.positions is None:
        raise ValueError("the spherical map needs vertex positions")
    timings = {} if timings is None else timings
    scale = math.sqrt(4.0 * math.pi / total_area(mesh))
    scaled = mesh.with_positions(mesh.positions * scale)

    with stage("segment", timings):
        split = segment_mesh(scaled, seed=seed)
    with stage("riemann", timings):
        maps = (
            riemann_map(split.disk0, tol=eps_yamabe),
            riemann_map(split.disk1, tol=eps_yamabe),
        )
    with stage("weld", timings):
        welded = zipper_weld(
            maps[0].embedding, maps[1].embedding, WeldingSignature.from_split(split)
        )
    with stage("stereographic", timings):
        refined = np.empty((split.mesh.n_vertices, 3))
        sphere = plane_to_sphere(welded.positions)
        refined[split.vertex_map0] = sphere[welded.disk1_map]
        refined[split.vertex_map1] = sphere[welded.disk2_map]
    with stage("normalize", timings):
        refined, centering = mobius_normalize(
            refined, vertex_area_weights(split.mesh), landmarks=landmarks
        )

    embedding = SphericalEmbedding(
        mesh,
        refined[: mesh.n_vertices].copy(),
        ConformalPipeline(split, maps, welded, scale, refined, centering),
        dict(timings),
    )
    flipped = embedding.flipped_faces()
    if flipped.size:
        logger.warning("conformal spherical map has %d flipped faces", flipped.size)
    return embedding
