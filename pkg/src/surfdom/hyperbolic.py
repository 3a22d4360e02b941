"""Geometry of the upper half-plane.

Points, ideal points and orientation-preserving isometries of the hyperbolic
plane, together with the distance, Busemann functions, horocyclic flows and
comparison angles.  Vectorised helpers for the Klein, Poincare and hyperboloid
models live at the bottom of the module; the rest of the package works in
Klein coordinates centred at ``i``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

PARABOLIC_TOL = 1e-9


class GeometryError(ValueError):
    """Base class for geometric precondition failures."""


class NotHyperbolic(GeometryError):
    pass


class DegenerateTriangle(GeometryError):
    pass


class CoincidentPoints(GeometryError):
    pass


class EqualBoundaryPoints(GeometryError):
    pass


@dataclass(frozen=True)
class Point:
    """A point ``x + iy`` of the upper half-plane (``y > 0``)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)) or self.y <= 0:
            raise GeometryError(f"not a point of the upper half-plane: ({self.x}, {self.y})")

    @classmethod
    def from_complex(cls, z: complex) -> "Point":
        return cls(float(z.real), float(z.imag))

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)


@dataclass(frozen=True)
class BoundaryPoint:
    """A point of R u {inf}; ``x is None`` encodes the point at infinity."""

    x: float | None = None

    def __post_init__(self):
        if self.x is not None and not math.isfinite(self.x):
            object.__setattr__(self, "x", None)

    @classmethod
    def infinity(cls) -> "BoundaryPoint":
        return cls(None)

    @property
    def is_infinite(self) -> bool:
        return self.x is None

    def close_to(self, other: "BoundaryPoint", tol: float = 1e-12) -> bool:
        if self.is_infinite or other.is_infinite:
            if self.is_infinite and other.is_infinite:
                return True
            finite = other.x if self.is_infinite else self.x
            return abs(finite) > 1.0 / tol
        return abs(self.x - other.x) <= tol * max(1.0, abs(self.x), abs(other.x))


def _normalize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float).reshape(2, 2)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if not det > 0 or not np.all(np.isfinite(m)):
        raise GeometryError(f"matrix does not define an orientation-preserving isometry (det={det})")
    m = m / math.sqrt(det)
    flat = m.ravel()
    thresh = 1e-14 * np.abs(flat).max()
    for v in flat:
        if abs(v) > thresh:
            if v < 0:
                m = -m
            break
    return m


class IsometryClass(enum.Enum):
    IDENTITY = "identity"
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"


class MoebiusMap:
    """Element of PSL(2,R), stored as a determinant-one matrix whose first
    non-zero entry (row-major) is positive."""

    __slots__ = ("m",)

    def __init__(self, a, b=None, c=None, d=None):
        if b is None:
            mat = np.asarray(a, dtype=float)
        else:
            mat = np.array([[a, b], [c, d]], dtype=float)
        self.m = _normalize(mat)
        self.m.setflags(write=False)

    @classmethod
    def identity(cls) -> "MoebiusMap":
        return cls(np.eye(2))

    @classmethod
    def translation_along_imaginary_axis(cls, t: float) -> "MoebiusMap":
        """``z -> e^t z``, translation length ``|t|``."""
        return cls(np.diag([math.exp(t / 2), math.exp(-t / 2)]))

    @classmethod
    def rotation(cls, theta: float, center: Point | None = None) -> "MoebiusMap":
        """Rotation by ``theta`` about ``center`` (default ``i``)."""
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        r = cls(np.array([[c, s], [-s, c]]))
        if center is None:
            return r
        h = cls(np.array([[math.sqrt(center.y), center.x / math.sqrt(center.y)], [0.0, 1 / math.sqrt(center.y)]]))
        return h @ r @ h.inverse()

    @property
    def matrix(self) -> np.ndarray:
        return self.m

    @property
    def trace(self) -> float:
        return float(self.m[0, 0] + self.m[1, 1])

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        return MoebiusMap(self.m @ other.m)

    def inverse(self) -> "MoebiusMap":
        a, b, c, d = self.m.ravel()
        return MoebiusMap(np.array([[d, -b], [-c, a]]))

    def __call__(self, p):
        return apply(self, p)

    def __eq__(self, other) -> bool:
        return isinstance(other, MoebiusMap) and np.allclose(self.m, other.m, rtol=0, atol=1e-12)

    def __hash__(self):
        return hash(tuple(np.round(self.m, 10).ravel()))

    def __repr__(self) -> str:
        a, b, c, d = self.m.ravel()
        return f"MoebiusMap([[{a:.6g}, {b:.6g}], [{c:.6g}, {d:.6g}]])"


def apply(g: MoebiusMap, p):
    """Act by ``g`` on a :class:`Point` or :class:`BoundaryPoint`."""
    a, b, c, d = g.m.ravel()
    if isinstance(p, Point):
        w = (a * p.z + b) / (c * p.z + d)
        return Point(w.real, max(w.imag, np.finfo(float).tiny))
    if isinstance(p, BoundaryPoint):
        if p.is_infinite:
            return BoundaryPoint(None if c == 0 else a / c)
        den = c * p.x + d
        if den == 0:
            return BoundaryPoint.infinity()
        return BoundaryPoint((a * p.x + b) / den)
    raise TypeError(f"cannot apply a Moebius map to {type(p).__name__}")


def dist(p: Point, q: Point) -> float:
    """Hyperbolic distance; uses the ``2 asinh`` form for accuracy at short range."""
    return float(2.0 * math.asinh(abs(p.z - q.z) / (2.0 * math.sqrt(p.y * q.y))))


def classify(g: MoebiusMap, tol: float = PARABOLIC_TOL) -> IsometryClass:
    if np.abs(g.m - np.eye(2)).max() <= tol:
        return IsometryClass.IDENTITY
    t = abs(g.trace)
    if abs(t - 2.0) <= tol:
        return IsometryClass.PARABOLIC
    return IsometryClass.ELLIPTIC if t < 2.0 else IsometryClass.HYPERBOLIC


def translation_length(g: MoebiusMap, tol: float = PARABOLIC_TOL) -> float:
    """``inf_x d(x, g x)``: ``2 arccosh(|tr|/2)`` for hyperbolic ``g``, else 0."""
    t = abs(g.trace)
    if t <= 2.0 + tol:
        return 0.0
    return 2.0 * math.acosh(t / 2.0)


def fixed_points(g: MoebiusMap) -> list:
    """Fixed points of a non-identity ``g``: a :class:`Point` for elliptic
    elements, boundary points otherwise (repelling first for hyperbolic)."""
    a, b, c, d = g.m.ravel()
    tr = a + d
    disc = tr * tr - 4.0
    if abs(c) < 1e-15 * max(1.0, abs(a), abs(d)):
        # upper triangular: infinity is fixed
        if abs(a - d) < 1e-15 * max(1.0, abs(a)):
            return [BoundaryPoint.infinity()]
        other = BoundaryPoint(b / (d - a))
        inf = BoundaryPoint.infinity()
        # z -> (a/d) z + b/d: infinity attracting iff |a| > |d|
        return [other, inf] if abs(a) > abs(d) else [inf, other]
    if disc < 0:
        z = ((a - d) + 1j * math.sqrt(-disc)) / (2 * c)
        if z.imag < 0:
            z = z.conjugate()
        return [Point.from_complex(z)]
    s = math.sqrt(max(disc, 0.0))
    r1 = ((a - d) + s) / (2 * c)
    r2 = ((a - d) - s) / (2 * c)
    if s == 0.0:
        return [BoundaryPoint(r1)]
    # derivative at a fixed point z is 1/(cz+d)^2; attracting iff |cz+d| > 1
    if abs(c * r1 + d) > 1.0:
        return [BoundaryPoint(r2), BoundaryPoint(r1)]
    return [BoundaryPoint(r1), BoundaryPoint(r2)]


def axis(g: MoebiusMap, tol: float = PARABOLIC_TOL) -> tuple[BoundaryPoint, BoundaryPoint]:
    """Endpoints ``(repelling, attracting)`` of the axis of a hyperbolic ``g``."""
    if classify(g, tol) is not IsometryClass.HYPERBOLIC:
        raise NotHyperbolic(f"{g!r} is not hyperbolic")
    rep, att = fixed_points(g)
    return rep, att


def to_infinity(p: BoundaryPoint) -> MoebiusMap:
    """An isometry sending ``p`` to infinity (the identity if ``p`` is infinite)."""
    if p.is_infinite:
        return MoebiusMap.identity()
    return MoebiusMap(np.array([[0.0, -1.0], [1.0, -p.x]]))


def busemann(p: BoundaryPoint, x0: Point, x: Point) -> float:
    """Busemann function normalised at ``x0``: ``lim d(x, r(t)) - t`` along the
    ray ``r`` from ``x0`` to ``p``.  For ``p = inf`` this is ``-ln(Im x / Im x0)``."""
    h = to_infinity(p)
    return -math.log(apply(h, x).y / apply(h, x0).y)


def horoflow(p: BoundaryPoint, t: float, x: Point) -> Point:
    """Move ``x`` a distance ``t`` along the geodesic towards ``p``."""
    h = to_infinity(p)
    y = apply(h, x)
    return apply(h.inverse(), Point(y.x, y.y * math.exp(t)))


def _log_sinh(u: float) -> float:
    if u > 20.0:
        return u - math.log(2.0) + math.log1p(-math.exp(-2.0 * u))
    return math.log(math.sinh(u))


def comparison_angle(l_opp: float, l1: float, l2: float, slack: float = 1e-12) -> float:
    """Angle opposite the side of length ``l_opp`` in the hyperbolic triangle
    whose other two sides have lengths ``l1`` and ``l2``.

    Uses the half-angle form of the hyperbolic law of cosines, which stays
    accurate for long, thin triangles.
    """
    if l1 <= 0 or l2 <= 0:
        raise DegenerateTriangle("a side adjacent to the angle has zero length")
    if l_opp < 0:
        raise DegenerateTriangle("negative side length")
    u = 0.5 * (l_opp + l1 - l2)
    v = 0.5 * (l_opp - l1 + l2)
    scale = slack * max(1.0, l1, l2, l_opp)
    if u < -scale or v < -scale or l_opp > l1 + l2 + 2 * scale:
        raise DegenerateTriangle(f"lengths ({l1}, {l2}, {l_opp}) violate the triangle inequality")
    if u <= 0 or v <= 0:
        return 0.0
    if l_opp >= l1 + l2:
        return math.pi
    log_s = _log_sinh(u) + _log_sinh(v) - _log_sinh(l1) - _log_sinh(l2)
    s = min(1.0, math.exp(0.5 * log_s))
    return 2.0 * math.asin(s)


def angle_at_vertex(y: Point, x: Point, z: Point) -> float:
    """Comparison angle at ``x`` in the triangle ``(y, x, z)``."""
    a, b = dist(x, y), dist(x, z)
    if a == 0.0 or b == 0.0:
        raise CoincidentPoints("the vertex coincides with another triangle vertex")
    return comparison_angle(dist(y, z), a, b)


def _direction_angle(x: Point, p: BoundaryPoint) -> float:
    # move x to i, then read off the endpoint on the Poincare disk circle
    h = MoebiusMap(np.array([[1 / math.sqrt(x.y), -x.x / math.sqrt(x.y)], [0.0, math.sqrt(x.y)]]))
    q = apply(h, p)
    if q.is_infinite:
        return 0.0
    w = (q.x - 1j) / (q.x + 1j)
    return math.atan2(w.imag, w.real)


def boundary_angle(x: Point, p: BoundaryPoint, q: BoundaryPoint) -> float:
    """Angle at ``x`` between the rays towards the ideal points ``p`` and ``q``."""
    if p.close_to(q):
        raise EqualBoundaryPoints("the two ideal points coincide")
    d = abs(_direction_angle(x, p) - _direction_angle(x, q)) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


# ---------------------------------------------------------------------------
# vectorised model conversions
#
# A point z = x + iy corresponds to the symmetric matrix (1/y)[[|z|^2, x], [x, 1]]
# on which g acts by P -> g P g^T.  The hyperboloid coordinates are
# X0 = (p11 + p22)/2, X1 = p12, X2 = (p11 - p22)/2 and the Klein coordinates
# (X1, X2)/X0.  The chart is orientation preserving and sends i to the origin.


def uhp_to_hyperboloid(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p11 = (x * x + y * y) / y
    p22 = 1.0 / y
    p12 = x / y
    return np.stack([(p11 + p22) / 2, p12, (p11 - p22) / 2], axis=-1)


def hyperboloid_to_uhp(X) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    p22 = X[..., 0] - X[..., 2]
    y = 1.0 / p22
    x = X[..., 1] * y
    return x, y


def uhp_to_klein(x, y) -> np.ndarray:
    X = uhp_to_hyperboloid(x, y)
    return X[..., 1:] / X[..., :1]


def klein_to_hyperboloid(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    d = 1.0 - np.sum(k * k, axis=-1)
    if np.any(d <= 0):
        raise GeometryError("Klein coordinates outside the unit disk")
    x0 = 1.0 / np.sqrt(d)
    return np.concatenate([x0[..., None], k * x0[..., None]], axis=-1)


def klein_to_uhp(k) -> tuple[np.ndarray, np.ndarray]:
    return hyperboloid_to_uhp(klein_to_hyperboloid(k))


def klein_to_poincare(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    d = 1.0 - np.sum(k * k, axis=-1, keepdims=True)
    return k / (1.0 + np.sqrt(np.clip(d, 0.0, None)))


def poincare_to_klein(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    r2 = np.sum(w * w, axis=-1, keepdims=True)
    return 2.0 * w / (1.0 + r2)


def klein_metric(k) -> np.ndarray:
    """Metric tensor of the Klein model at ``k`` (shape ``(..., 2, 2)``)."""
    k = np.asarray(k, dtype=float)
    d = 1.0 - np.sum(k * k, axis=-1)
    eye = np.eye(2)
    return eye / d[..., None, None] + k[..., :, None] * k[..., None, :] / (d * d)[..., None, None]


def klein_to_poincare_jacobian(k) -> np.ndarray:
    """Derivative of the Klein-to-Poincare map at ``k`` (shape ``(..., 2, 2)``)."""
    k = np.asarray(k, dtype=float)
    s = np.sqrt(1.0 - np.sum(k * k, axis=-1))
    den = 1.0 + s
    eye = np.eye(2)
    return eye / den[..., None, None] + (k[..., :, None] * k[..., None, :]) / (s * den * den)[..., None, None]


def minkowski(X, Y) -> np.ndarray:
    """Bilinear form with ``minkowski(X, X) = 1`` on the hyperboloid."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    return X[..., 0] * Y[..., 0] - X[..., 1] * Y[..., 1] - X[..., 2] * Y[..., 2]


def so21_matrix(g) -> np.ndarray:
    """Linear action of ``g`` on hyperboloid coordinates (3x3 matrix)."""
    m = g.m if isinstance(g, MoebiusMap) else np.asarray(g, dtype=float)
    return so21_matrices(m[None])[0]


def so21_matrices(ms) -> np.ndarray:
    """Batched :func:`so21_matrix` for an array of 2x2 matrices."""
    ms = np.asarray(ms, dtype=float)
    a, b, c, d = ms[:, 0, 0], ms[:, 0, 1], ms[:, 1, 0], ms[:, 1, 1]
    # images of the symmetric basis P = E11, E22, (E12 + E21) under P -> g P g^T,
    # written in (p11, p12, p22)
    img = np.empty(ms.shape[:1] + (3, 3))
    img[:, :, 0] = np.stack([a * a, a * c, c * c], axis=-1)  # E11
    img[:, :, 1] = np.stack([2 * a * b, a * d + b * c, 2 * c * d], axis=-1)  # E12 + E21
    img[:, :, 2] = np.stack([b * b, b * d, d * d], axis=-1)  # E22
    # (X0, X1, X2) -> (p11, p12, p22): p11 = X0 + X2, p12 = X1, p22 = X0 - X2
    to_p = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, -1.0]])
    # coefficients in basis (E11, E12+E21, E22) are (p11, p12, p22)
    from_p = np.array([[0.5, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, -0.5]])
    return from_p @ img @ to_p


def klein_action(M: np.ndarray, k) -> np.ndarray:
    """Apply the SO(2,1) matrix ``M`` to Klein coordinates ``k``."""
    k = np.asarray(k, dtype=float)
    X = M[..., :, 0] + np.einsum("...ij,...j->...i", M[..., :, 1:], k)
    return X[..., 1:] / X[..., :1]
