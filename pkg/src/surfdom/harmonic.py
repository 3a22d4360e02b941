"""Discrete equivariant harmonic maps from a meshed hyperbolic surface.

Maps are piecewise affine in Klein coordinates of both the domain and the
target: each geodesic face is sent to the geodesic triangle spanned by the
images of its corners.  Values live on the master vertices; every other vertex
carries ``rho(w) . master`` and is eliminated exactly through the chain rule.

The energy ``1/2 int tr(g^-1 f*g_t) dA`` is integrated with a collapsed
Gauss-Jacobi rule on every face.  Since the identity map of a surface is
itself piecewise Klein-affine, it is then a critical point of the discrete
energy up to quadrature error.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import roots_jacobi, roots_legendre

from .hyperbolic import (
    BoundaryPoint,
    Point,
    klein_action,
    klein_metric,
    klein_to_hyperboloid,
    klein_to_poincare,
    klein_to_poincare_jacobian,
    klein_to_uhp,
    so21_matrices,
    to_infinity,
    uhp_to_klein,
)
from .surface import ParabolicData, SurfaceRep, detect_parabolic, euler_class
from .teichmuller.mesh import IndexMismatch, Mesh, conformal_factors, geodesic_triangle_areas
from .teichmuller.weil_petersson import QuadDiff

log = logging.getLogger(__name__)

GRADIENT_TOL = 1e-8
CONSTRAINT_TOL = 1e-9
MAX_ITERATIONS = 20_000
RESTART_EVERY = 50
REFRESH_EVERY = 5
# relative energy increase tolerated at the rounding floor
ROUNDING_SLACK = 1e-12
QUADRATURE_ORDER = 4
PATCH_EDGES = 4.0


class HarmonicError(RuntimeError):
    pass


class DegenerateFace(HarmonicError):
    pass


class SingularMetric(HarmonicError):
    pass


class SingularSystem(HarmonicError):
    pass


class ParabolicTarget(HarmonicError):
    """The representation fixes a boundary point; use the line solver."""

    def __init__(self, data: ParabolicData):
        super().__init__("representation fixes a point at infinity; solve into the line instead")
        self.data = data


class MaxIterations(HarmonicError):
    """Raised with the best map found so far in ``result``."""

    def __init__(self, msg: str, result):
        super().__init__(msg)
        self.result = result


class TargetKind(enum.Enum):
    HYPERBOLIC_PLANE = "hyperbolic_plane"
    REAL_LINE = "real_line"


@dataclass(frozen=True)
class TargetSpace:
    kind: TargetKind = TargetKind.HYPERBOLIC_PLANE
    scale: float = 1.0

    def __post_init__(self):
        if self.kind is TargetKind.HYPERBOLIC_PLANE and not self.scale >= 1.0:
            raise ValueError(f"scale must be at least 1, got {self.scale}")

    @classmethod
    def hyperbolic_plane(cls, alpha: float = 1.0) -> "TargetSpace":
        return cls(TargetKind.HYPERBOLIC_PLANE, float(alpha))

    @classmethod
    def real_line(cls) -> "TargetSpace":
        return cls(TargetKind.REAL_LINE, 1.0)

    @property
    def is_line(self) -> bool:
        return self.kind is TargetKind.REAL_LINE


@dataclass
class EquivariantMap:
    """Per-vertex values of an equivariant map.

    For the hyperbolic plane ``values`` holds Klein coordinates ``(V, 2)``; for
    the line it holds reals ``(V,)``.  ``constraint`` is the representation
    (or the parabolic data providing the morphism for the line).  A line map
    with an ``axis`` is also a map into the plane through the unit-speed
    parametrisation of that geodesic.
    """

    target: TargetSpace
    values: np.ndarray
    constraint: SurfaceRep | ParabolicData | None = None
    axis: tuple[BoundaryPoint, BoundaryPoint] | None = None

    def points(self) -> np.ndarray:
        """Images as upper half-plane points ``(V, 2)``."""
        k = self.klein()
        x, y = klein_to_uhp(k)
        return np.stack([x, y], axis=1)

    def klein(self) -> np.ndarray:
        if not self.target.is_line:
            return self.values
        if self.axis is None:
            raise ValueError("a line map without an axis has no planar image")
        return axis_points(self.axis, self.values)

    def constraint_violation(self, mesh: Mesh) -> float:
        """Largest mismatch between a vertex value and the image of its master."""
        err = 0.0
        if self.target.is_line:
            data = self.constraint
            if not isinstance(data, ParabolicData):
                return 0.0
            for v in range(mesh.n_vertices):
                m = mesh.master[v]
                err = max(err, abs(self.values[v] - self.values[m] - data.evaluate(mesh.vertex_words[v])))
            return err
        rep = self.constraint
        M = _vertex_actions(mesh, rep)
        img = klein_action(M, self.values[mesh.master])
        return float(np.abs(img - self.values).max())


def axis_points(axis: tuple[BoundaryPoint, BoundaryPoint], t: np.ndarray) -> np.ndarray:
    """Klein coordinates of the points with Busemann value ``t`` (towards
    ``axis[0]``, based at the foot of ``i``) on the geodesic ``axis``."""
    p, q = axis
    h = to_infinity(p)
    qq = h(q)
    # after h the axis is the vertical line through Re h(q); Busemann value of
    # x + iy towards infinity, normalised at h(i), is -ln(y / Im h(i))
    y0 = h(Point(0.0, 1.0)).y
    x = np.full(np.shape(t), qq.x)
    y = y0 * np.exp(-np.asarray(t, dtype=float))
    hi = h.inverse().m
    z = x + 1j * y
    w = (hi[0, 0] * z + hi[0, 1]) / (hi[1, 0] * z + hi[1, 1])
    return uhp_to_klein(w.real, w.imag)


@dataclass
class EnergyReport:
    """Energy of a map.  ``density * face area`` sums to ``total``; the
    pullback is taken at the face barycentre in the Poincare chart."""

    density: np.ndarray
    total: float
    pullback: np.ndarray
    gradient_norm: float
    iterations: int = 0
    converged: bool = True
    history: list[tuple[int, float, float, float]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# quadrature and per-face geometry


def triangle_quadrature(n: int = QUADRATURE_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule with ``n*n`` points, exact to degree ``2n-1``.

    Returns barycentric coordinates ``(n*n, 3)`` and weights summing to one.
    """
    u, wu = roots_jacobi(n, 1.0, 0.0)
    v, wv = roots_legendre(n)
    s = (1.0 + u) / 2.0
    r = (1.0 + v) / 2.0
    S, R = np.meshgrid(s, r, indexing="ij")
    l1 = S.ravel()
    l2 = ((1.0 - S) * R).ravel()
    bary = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    w = np.outer(wu, wv).ravel() / 4.0
    return bary, w


_EDGE = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class MeshGeometry:
    """Quantities of a mesh shared by every map defined on it."""

    def __init__(self, mesh: Mesh, order: int = QUADRATURE_ORDER):
        self.mesh = mesh
        k = mesh.klein
        f = mesh.faces
        self.faces = f
        k0 = k[f[:, 0]]
        K = np.stack([k[f[:, 1]] - k0, k[f[:, 2]] - k0], axis=2)
        det = K[:, 0, 0] * K[:, 1, 1] - K[:, 0, 1] * K[:, 1, 0]
        scale = np.einsum("fij,fij->f", K, K)
        bad = det <= 1e-13 * scale
        if np.any(bad):
            raise DegenerateFace(f"{int(bad.sum())} faces are flat or inverted in the chart (first: {int(np.flatnonzero(bad)[0])})")
        self.B = np.linalg.inv(K)
        self.bary, w = triangle_quadrature(order)
        lam = self.bary[:, 1:]
        self.lam = lam
        pts = k0[:, None, :] + np.einsum("fij,qj->fqi", K, lam)
        d = 1.0 - np.sum(pts * pts, axis=-1)
        a = w[None, :] * (0.5 * det)[:, None] * d ** -1.5
        C = d[..., None, None] * (np.eye(2) - pts[..., :, None] * pts[..., None, :])
        self.W = a[..., None, None] * np.einsum("fij,fqjk,flk->fqil", self.B, C, self.B)
        self.w00, self.w01, self.w11 = self.W[..., 0, 0], self.W[..., 0, 1], self.W[..., 1, 1]
        S = self.W.sum(axis=1)
        self.stiffness = np.einsum("ia,fab,jb->fij", _EDGE, S, _EDGE)
        self.areas = mesh.face_areas()
        self.centroid = k[f].mean(axis=1)
        # barycentric Jacobian from Klein to Poincare coordinates
        self.L = np.linalg.inv(klein_to_poincare_jacobian(self.centroid))
        self.alpha = conformal_factors(self.centroid)
        self.n_vertices = mesh.n_vertices


_GEOMETRY_CACHE: dict[int, MeshGeometry] = {}


def mesh_geometry(mesh: Mesh, order: int = QUADRATURE_ORDER) -> MeshGeometry:
    key = id(mesh)
    geo = _GEOMETRY_CACHE.get(key)
    if geo is None or geo.mesh is not mesh or len(geo.bary) != order * order:
        geo = MeshGeometry(mesh, order)
        if len(_GEOMETRY_CACHE) > 16:
            _GEOMETRY_CACHE.clear()
        _GEOMETRY_CACHE[key] = geo
    return geo


def _vertex_actions(mesh: Mesh, rep: SurfaceRep) -> np.ndarray:
    """SO(2,1) matrices of ``rho(w_v)`` for every vertex."""
    cache: dict[tuple, np.ndarray] = {}
    mats = np.empty((mesh.n_vertices, 2, 2))
    for v, w in enumerate(mesh.vertex_words):
        m = cache.get(w.letters)
        if m is None:
            m = rep.matrix(w)
            cache[w.letters] = m
        mats[v] = m
    return so21_matrices(mats)


# ---------------------------------------------------------------------------
# energy, pullback, Hopf differential


def _face_energy(geo: MeshGeometry, uf: np.ndarray, with_grad: bool):
    """Face energies and corner gradients ``(F, 3, 2)`` for corner values ``uf``.

    Written out in components: small einsums dominate the run time otherwise.
    """
    u0x, u0y = uf[:, 0, 0, None], uf[:, 0, 1, None]
    a = uf[:, 1, 0, None] - u0x  # U = [[a, b], [c, e]]
    c = uf[:, 1, 1, None] - u0y
    b = uf[:, 2, 0, None] - u0x
    e_ = uf[:, 2, 1, None] - u0y
    l1, l2 = geo.lam[:, 0], geo.lam[:, 1]
    px = u0x + a * l1 + b * l2
    py = u0y + c * l1 + e_ * l2
    d = 1.0 - px * px - py * py
    if np.any(d <= 0.0):
        return np.full(len(uf), np.inf), None
    w00, w01, w11 = geo.w00, geo.w01, geo.w11
    # UW = U W
    q00 = a * w00 + b * w01
    q01 = a * w01 + b * w11
    q10 = c * w00 + e_ * w01
    q11 = c * w01 + e_ * w11
    # S = U W U^T
    s00 = q00 * a + q01 * b
    s01 = q00 * c + q01 * e_
    s11 = q10 * c + q11 * e_
    trS = s00 + s11
    Spx = s00 * px + s01 * py
    Spy = s01 * px + s11 * py
    pSp = px * Spx + py * Spy
    inv_d = 1.0 / d
    inv_d2 = inv_d * inv_d
    energy = 0.5 * np.sum(trS * inv_d + pSp * inv_d2, axis=1)
    if not with_grad:
        return energy, None
    # G U W with G = I/d + p p^T / d^2
    pq0 = (px * q00 + py * q10) * inv_d2
    pq1 = (px * q01 + py * q11) * inv_d2
    dU00 = np.sum(q00 * inv_d + px * pq0, axis=1)
    dU01 = np.sum(q01 * inv_d + px * pq1, axis=1)
    dU10 = np.sum(q10 * inv_d + py * pq0, axis=1)
    dU11 = np.sum(q11 * inv_d + py * pq1, axis=1)
    # half the derivative of tr(S G(p)) in p
    coef = trS * inv_d2 + 2.0 * pSp * inv_d2 * inv_d
    gpx = coef * px + Spx * inv_d2
    gpy = coef * py + Spy * inv_d2
    gv = np.empty((len(uf), 3, 2))
    gv[:, :, 0] = gpx @ geo.bary
    gv[:, :, 1] = gpy @ geo.bary
    gv[:, 1, 0] += dU00
    gv[:, 1, 1] += dU10
    gv[:, 2, 0] += dU01
    gv[:, 2, 1] += dU11
    gv[:, 0, 0] -= dU00 + dU01
    gv[:, 0, 1] -= dU10 + dU11
    return energy, gv


def _scatter(geo: MeshGeometry, gv: np.ndarray) -> np.ndarray:
    f = geo.faces.ravel()
    g = np.empty((geo.n_vertices, 2))
    flat = gv.reshape(-1, 2)
    for i in range(2):
        g[:, i] = np.bincount(f, weights=flat[:, i], minlength=geo.n_vertices)
    return g


def _face_differential(geo: MeshGeometry, values: np.ndarray) -> np.ndarray:
    f = geo.faces
    v0 = values[f[:, 0]]
    if values.ndim == 1:
        U = np.stack([values[f[:, 1]] - v0, values[f[:, 2]] - v0], axis=1)[:, None, :]
    else:
        U = np.stack([values[f[:, 1]] - v0, values[f[:, 2]] - v0], axis=2)
    return U @ geo.B


def _pullback(geo: MeshGeometry, emap: EquivariantMap) -> np.ndarray:
    """Pullback metric at the face barycentres in the Poincare chart."""
    D = _face_differential(geo, emap.values)
    if emap.target.is_line:
        h = np.einsum("fki,fkj->fij", D, D)
    else:
        c = emap.values[geo.faces].mean(axis=1)
        h = np.einsum("fki,fkl,flj->fij", D, klein_metric(c), D)
    h = np.einsum("fki,fkl,flj->fij", geo.L, h, geo.L)
    return h / emap.target.scale**2


def pullback_metric(emap: EquivariantMap, mesh: Mesh, face: int | None = None) -> np.ndarray:
    """Pullback of the target metric, per face (or for one face)."""
    geo = mesh_geometry(mesh)
    h = _pullback(geo, emap)
    return h if face is None else h[face]


def energy_density(h: np.ndarray, g: np.ndarray) -> float:
    """``1/2 tr(g^-1 h)``."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if not (det > 0 and g[0, 0] > 0):
        raise SingularMetric("metric is not positive definite")
    ginv = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det
    return 0.5 * float(np.trace(ginv @ h))


def _face_energies(geo: MeshGeometry, emap: EquivariantMap) -> np.ndarray:
    if emap.target.is_line:
        f = emap.values[geo.faces]
        e = 0.5 * np.einsum("fi,fij,fj->f", f, geo.stiffness, f)
    else:
        e, _ = _face_energy(geo, emap.values[geo.faces], False)
    return e / emap.target.scale**2


def total_energy(emap: EquivariantMap, mesh: Mesh) -> EnergyReport:
    geo = mesh_geometry(mesh)
    ef = _face_energies(geo, emap)
    if not np.all(np.isfinite(ef)):
        raise HarmonicError("map leaves the target")
    return EnergyReport(ef / geo.areas, float(np.sum(ef)), _pullback(geo, emap), float("nan"))


def hopf_differential(emap: EquivariantMap, mesh: Mesh) -> QuadDiff:
    """``(h11 - h22 - 2i h12) / 4`` of the pullback in the Poincare chart."""
    h = pullback_metric(emap, mesh)
    return QuadDiff(0.25 * (h[:, 0, 0] - h[:, 1, 1] - 2j * h[:, 0, 1]))


def reconstruct_pullback(phi: QuadDiff, density: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """``e g + Phi + conj(Phi)`` as symmetric matrices, with ``g = alpha |dw|^2``."""
    p = phi.values
    out = np.empty((len(p), 2, 2))
    out[:, 0, 0] = density * alpha + 2.0 * p.real
    out[:, 1, 1] = density * alpha - 2.0 * p.real
    out[:, 0, 1] = out[:, 1, 0] = -2.0 * p.imag
    return out


def pointwise_density(emap: EquivariantMap, mesh: Mesh) -> np.ndarray:
    """Energy density of the barycentre pullback against ``alpha |dw|^2``."""
    h = pullback_metric(emap, mesh)
    return 0.5 * (h[:, 0, 0] + h[:, 1, 1]) / mesh.conformal_factor


def holomorphicity_residual(phi: QuadDiff, mesh: Mesh, radius: float | None = None, max_patches: int = 400) -> float:
    """Discrete dbar defect of a face-sampled quadratic differential.

    On patches of hyperbolic radius ``radius`` (by default ``PATCH_EDGES``
    median edge lengths) away from the domain boundary,
    the values are fitted by holomorphic polynomials of degree two in the
    Poincare coordinate; the result is the area-weighted RMS misfit (measured
    against the metric, ``|phi| / alpha``) divided by the radius.
    """
    if len(phi) != mesh.n_faces:
        raise IndexMismatch("differential and mesh disagree on the number of faces")
    geo = mesh_geometry(mesh)
    if radius is None:
        radius = PATCH_EDGES * float(np.median(mesh.edge_lengths()))
    w = klein_to_poincare(geo.centroid)
    wc = w[:, 0] + 1j * w[:, 1]
    X = klein_to_hyperboloid(geo.centroid)
    # distance of every centroid to the domain boundary, via the boundary vertices
    bnd = np.unique(mesh.boundary_edges())
    Xb = klein_to_hyperboloid(mesh.klein[bnd])
    dist_b = np.full(len(X), np.inf)
    for start in range(0, len(Xb), 256):
        G = X @ (Xb[start : start + 256] * np.array([1.0, -1.0, -1.0])).T
        dist_b = np.minimum(dist_b, np.arccosh(np.maximum(G.min(axis=1), 1.0)))
    cand = np.flatnonzero(dist_b > radius + 0.05)
    if len(cand) == 0:
        return float("nan")
    step = max(1, len(cand) // max_patches)
    centers = cand[::step]
    num = den = 0.0
    for c in centers:
        G = X @ (X[c] * np.array([1.0, -1.0, -1.0]))
        near = np.flatnonzero(np.arccosh(np.maximum(G, 1.0)) < radius)
        if len(near) < 8:
            continue
        z = wc[near] - wc[c]
        s = np.abs(z).max()
        A = np.stack([np.ones_like(z), z / s, (z / s) ** 2], axis=1)
        # fit phi itself (holomorphic in w), weighting by area / alpha^2
        wt = np.sqrt(geo.areas[near]) / geo.alpha[near]
        coef, *_ = np.linalg.lstsq(A * wt[:, None], phi.values[near] * wt, rcond=None)
        r = (phi.values[near] - A @ coef) * wt
        num += float(np.sum(np.abs(r) ** 2))
        den += float(np.sum(geo.areas[near]))
    if den == 0.0:
        return float("nan")
    return math.sqrt(num / den) / radius


# ---------------------------------------------------------------------------
# the constrained problem


class _Problem:
    """Energy as a function of the master values."""

    def __init__(self, mesh: Mesh, rep: SurfaceRep, order: int = QUADRATURE_ORDER):
        self.geo = mesh_geometry(mesh, order)
        self.mesh = mesh
        self.masters = mesh.masters()
        pos = -np.ones(mesh.n_vertices, dtype=np.int64)
        pos[self.masters] = np.arange(len(self.masters))
        self.slot = pos[mesh.master]
        self.M = _vertex_actions(mesh, rep)
        self.n_evals = 0

    def expand(self, x: np.ndarray) -> np.ndarray:
        return klein_action(self.M, x[self.slot])

    def jacobians(self, x: np.ndarray) -> np.ndarray:
        M = self.M
        k = x[self.slot]
        Y = M[:, :, 0] + np.einsum("vij,vj->vi", M[:, :, 1:], k)
        y0 = Y[:, 0]
        J = (M[:, 1:, 1:] * y0[:, None, None] - Y[:, 1:, None] * M[:, None, 0, 1:]) / (y0 * y0)[:, None, None]
        return J

    def energy(self, x: np.ndarray) -> float:
        self.n_evals += 1
        if np.any(np.sum(x * x, axis=1) >= 1.0):
            return math.inf
        u = self.expand(x)
        e, _ = _face_energy(self.geo, u[self.geo.faces], False)
        return float(np.sum(e))

    def energy_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        if np.any(np.sum(x * x, axis=1) >= 1.0):
            return math.inf, np.zeros_like(x)
        u = self.expand(x)
        e, gv = _face_energy(self.geo, u[self.geo.faces], True)
        E = float(np.sum(e))
        if not math.isfinite(E):
            return math.inf, np.zeros_like(x)
        gu = _scatter(self.geo, gv)
        J = self.jacobians(x)
        gm = np.einsum("vji,vj->vi", J, gu)
        g = np.zeros_like(x)
        np.add.at(g, self.slot, gm)
        return E, g

    def hessian(self, x: np.ndarray) -> sp.csc_matrix:
        """Hessian in the master values.

        Per-face blocks come from central differences of the analytic face
        gradients; the curvature of the slave parametrisation is exact.
        """
        geo = self.geo
        f = geo.faces
        u = self.expand(x)
        J = self.jacobians(x)
        eps = 1e-5
        Hf = np.empty((len(f), 6, 6))
        for a in range(3):
            for i in range(2):
                cols = []
                for sgn in (1.0, -1.0):
                    uf = u[f].copy()
                    uf[:, a, i] += sgn * eps
                    cols.append(_face_energy(geo, uf, True)[1])
                Hf[:, :, 2 * a + i] = ((cols[0] - cols[1]) / (2 * eps)).reshape(len(f), 6)
        Hf = 0.5 * (Hf + Hf.transpose(0, 2, 1))
        n = len(self.masters)
        rows, cols_, vals = [], [], []
        for a in range(3):
            for b in range(3):
                va, vb = f[:, a], f[:, b]
                blk = np.einsum("fki,fkl,flj->fij", J[va], Hf[:, 2 * a : 2 * a + 2, 2 * b : 2 * b + 2], J[vb])
                ia, ib = self.slot[va], self.slot[vb]
                for i in range(2):
                    for j in range(2):
                        rows.append(2 * ia + i)
                        cols_.append(2 * ib + j)
                        vals.append(blk[:, i, j])
        # second derivatives of k -> M . k in Klein coordinates
        _, gv = _face_energy(geo, u[f], True)
        gu = _scatter(geo, gv)
        M = self.M
        k = x[self.slot]
        Y = M[:, :, 0] + np.einsum("vij,vj->vi", M[:, :, 1:], k)
        y0 = Y[:, 0]
        dY = M[:, :, 1:]
        C = np.zeros((len(k), 2, 2))
        for c in range(2):
            yi, dyi = Y[:, 1 + c], dY[:, 1 + c, :]
            d0 = dY[:, 0, :]
            t = -(dyi[:, :, None] * d0[:, None, :] + d0[:, :, None] * dyi[:, None, :]) / (y0 * y0)[:, None, None]
            t += 2.0 * (yi / y0**3)[:, None, None] * d0[:, :, None] * d0[:, None, :]
            C += gu[:, c, None, None] * t
        sl = self.slot
        for i in range(2):
            for j in range(2):
                rows.append(2 * sl + i)
                cols_.append(2 * sl + j)
                vals.append(C[:, i, j])
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols_))), shape=(2 * n, 2 * n)).tocsc()
        return 0.5 * (H + H.T)

    def preconditioner(self, x: np.ndarray):
        """Factorised Gauss-Newton part of the Hessian (fixed target metric)."""
        geo = self.geo
        u = self.expand(x)
        J = self.jacobians(x)
        f = geo.faces
        Gf = klein_metric(u[f].mean(axis=1))
        n = len(self.masters)
        rows, cols, vals = [], [], []
        for a in range(3):
            for b in range(3):
                va, vb = f[:, a], f[:, b]
                blk = geo.stiffness[:, a, b][:, None, None] * np.einsum("fki,fkl,flj->fij", J[va], Gf, J[vb])
                ia, ib = self.slot[va], self.slot[vb]
                for i in range(2):
                    for j in range(2):
                        rows.append(2 * ia + i)
                        cols.append(2 * ib + j)
                        vals.append(blk[:, i, j])
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n)).tocsc()
        diag = H.diagonal()
        H = H + sp.diags(1e-10 * max(float(diag.max()), 1e-300) + np.zeros(2 * n))
        return splu(H.tocsc())


def identity_init(mesh: Mesh, rep: SurfaceRep) -> EquivariantMap:
    """Master vertices at their own positions, other vertices by ``rho``."""
    prob = _Problem(mesh, rep)
    x = mesh.klein[prob.masters]
    return EquivariantMap(TargetSpace.hyperbolic_plane(), prob.expand(x), rep)


def constant_init(mesh: Mesh, rep: SurfaceRep, point: Point | None = None) -> EquivariantMap:
    prob = _Problem(mesh, rep)
    p = point or Point(0.0, 1.0)
    k = uhp_to_klein(p.x, p.y)
    x = np.tile(k, (len(prob.masters), 1))
    return EquivariantMap(TargetSpace.hyperbolic_plane(), prob.expand(x), rep)


def default_init(mesh: Mesh, rep: SurfaceRep) -> EquivariantMap:
    """Identity-like start for Fuchsian representations, constant at ``i`` otherwise."""
    if abs(euler_class(rep)) == 2 * rep.genus - 2:
        return identity_init(mesh, rep)
    return constant_init(mesh, rep)


def _report(prob: _Problem, x: np.ndarray, target: TargetSpace, rep, gnorm, it, converged, history):
    emap = EquivariantMap(target, prob.expand(x), rep)
    geo = prob.geo
    ef = _face_energies(geo, emap)
    rep_out = EnergyReport(ef / geo.areas, float(np.sum(ef)), _pullback(geo, emap), gnorm, it, converged, history)
    return emap, rep_out


def solve_harmonic(
    mesh: Mesh,
    rho: SurfaceRep,
    target: TargetSpace | None = None,
    init: EquivariantMap | None = None,
    tol: float = GRADIENT_TOL,
    max_iter: int = MAX_ITERATIONS,
    check_parabolic: bool = True,
) -> tuple[EquivariantMap, EnergyReport]:
    """Minimise the discrete energy over ``rho``-equivariant maps.

    Preconditioned nonlinear conjugate gradients (Polak-Ribiere+) with Armijo
    backtracking, restarted every ``RESTART_EVERY`` iterations.  The
    convergence measure is ``|grad E| / E`` with ``E`` at scale one.
    """
    target = target or TargetSpace.hyperbolic_plane()
    if target.is_line:
        raise ValueError("use solve_harmonic_line for the real line")
    if rho.genus != mesh.genus:
        raise IndexMismatch("representation and mesh have different genus")
    if check_parabolic:
        data = detect_parabolic(rho)
        if data is not None:
            if data.is_boundary:
                raise ParabolicTarget(data)
            # a common interior fixed point: the constant map there is the minimiser
            emap = constant_init(mesh, rho, data.fixed_point)
            emap = EquivariantMap(target, emap.values, rho)
            rep = EnergyReport(np.zeros(mesh.n_faces), 0.0, np.zeros((mesh.n_faces, 2, 2)), 0.0, 0, True, [(0, 0.0, 0.0, 0.0)])
            return emap, rep
    prob = _Problem(mesh, rho)
    if init is None:
        init = default_init(mesh, rho)
    if init.values.shape != (mesh.n_vertices, 2):
        raise IndexMismatch("initial map does not match the mesh")
    x = np.array(init.values[prob.masters], dtype=float)
    x, gn, it, converged, history = _minimise(prob, x, tol, max_iter)
    emap, report = _report(prob, x, target, rho, gn, it, converged, history)
    if not converged:
        raise MaxIterations(f"no convergence after {it} iterations (|grad|/E = {gn:.3g})", (emap, report))
    return emap, report


def _relative(E: float, g: np.ndarray) -> float:
    n = float(np.linalg.norm(g))
    return n / E if E > 0 else n


def _minimise(prob: _Problem, x: np.ndarray, tol: float, max_iter: int):
    """Preconditioned Polak-Ribiere+ descent.

    The preconditioner is the factorised Hessian while it yields descent
    directions and the Gauss-Newton matrix otherwise; it is refreshed every
    ``REFRESH_EVERY`` iterations and at every restart.  Near the rounding floor
    of ``E`` a step is also accepted when the energy rises by less than
    ``ROUNDING_SLACK * E`` and the gradient shrinks.
    """
    E, g = prob.energy_grad(x)
    if not math.isfinite(E):
        raise HarmonicError("initial map leaves the target")
    gn = _relative(E, g)
    history = [(0, E, gn, 0.0)]
    it = 0
    P = None
    d = s = g_prev = None
    since_refresh = 0
    failures = 0
    while gn >= tol and it < max_iter:
        it += 1
        refresh = P is None or since_refresh >= REFRESH_EVERY or it % RESTART_EVERY == 0
        if refresh:
            P, newton = _factor(prob, x, g, prefer_newton=failures == 0)
            since_refresh = 0
            s_new = P.solve(g.ravel()).reshape(x.shape)
            d = -s_new
        else:
            s_new = P.solve(g.ravel()).reshape(x.shape)
            beta = max(0.0, float(np.sum(g * (s_new - s))) / float(np.sum(g_prev * s)))
            d = -s_new + beta * d
        s = s_new
        slope = float(np.sum(g * d))
        if slope >= 0.0:
            d = -s
            slope = float(np.sum(g * d))
        t = 1.0
        accepted = False
        while t > 1e-12:
            xt = x + t * d
            Et, gt = prob.energy_grad(xt)
            if Et <= E + 1e-4 * t * slope:
                accepted = True
                break
            if Et <= E * (1.0 + ROUNDING_SLACK) and _relative(Et, gt) < gn:
                accepted = True
                break
            t *= 0.5
        since_refresh += 1
        if not accepted:
            failures += 1
            P = None
            if failures > 3:
                log.info("line search failed at |g|/E = %.3g", gn)
                break
            continue
        failures = 0
        g_prev = g
        x, E, g = xt, Et, gt
        gn = _relative(E, g)
        history.append((it, E, gn, t))
    return x, gn, it, gn < tol, history


def _factor(prob: _Problem, x: np.ndarray, g: np.ndarray, prefer_newton: bool):
    if prefer_newton:
        H = prob.hessian(x)
        try:
            lu = splu(H)
            s = lu.solve(g.ravel())
            if np.all(np.isfinite(s)) and float(g.ravel() @ s) > 0 and float(s @ (H @ s)) > 0:
                return lu, True
        except RuntimeError:
            pass
    return prob.preconditioner(x), False


def solve_harmonic_line(mesh: Mesh, data: ParabolicData | np.ndarray) -> tuple[EquivariantMap, EnergyReport]:
    """Harmonic function with additive jumps ``m(w)`` across the side pairings,
    normalised to vanish at vertex 0.  A common axis in ``data`` makes the
    result a map into the plane as well."""
    if not isinstance(data, ParabolicData):
        morph = np.asarray(data, dtype=float)
        if morph.shape != (2 * mesh.genus,):
            raise IndexMismatch("one morphism value per generator is required")
        data = ParabolicData(BoundaryPoint.infinity(), morph)
    geo = mesh_geometry(mesh)
    nv = mesh.n_vertices
    f = geo.faces
    rows = np.repeat(f, 3, axis=1).ravel()
    cols = np.tile(f, (1, 3)).ravel()
    K = sp.coo_matrix((geo.stiffness.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    masters = mesh.masters()
    pos = -np.ones(nv, dtype=np.int64)
    pos[masters] = np.arange(len(masters))
    slot = pos[mesh.master]
    P = sp.coo_matrix((np.ones(nv), (np.arange(nv), slot)), shape=(nv, len(masters))).tocsr()
    c = np.array([data.evaluate(w) for w in mesh.vertex_words])
    A = (P.T @ K @ P).tocsc()
    b = -(P.T @ (K @ c))
    # vertex 0 is a master with the empty word
    free = np.arange(1, len(masters))
    if mesh.master[0] != 0:
        raise IndexMismatch("vertex 0 must be a master vertex")
    try:
        lu = splu(A[free][:, free].tocsc())
        y = lu.solve(b[free])
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(y)):
        raise SingularSystem("line system produced non-finite values")
    xm = np.concatenate([[0.0], y])
    vals = P @ xm + c
    axis = (data.fixed_point, data.partner) if data.partner is not None else None
    emap = EquivariantMap(TargetSpace.real_line(), vals, data, axis)
    ef = _face_energies(geo, emap)
    grad = A @ xm - (-(P.T @ (K @ c)))
    E = float(np.sum(ef))
    gn = float(np.linalg.norm(grad[1:])) / E if E > 0 else float(np.linalg.norm(grad[1:]))
    report = EnergyReport(ef / geo.areas, E, _pullback(geo, emap), gn, 1, True, [(1, E, gn, 1.0)])
    return emap, report


def solve_any(mesh: Mesh, rho: SurfaceRep, target: TargetSpace | None = None, **kw) -> tuple[EquivariantMap, EnergyReport]:
    """Solve into the plane, rerouting parabolic representations to the line."""
    try:
        return solve_harmonic(mesh, rho, target, **kw)
    except ParabolicTarget as exc:
        emap, rep = solve_harmonic_line(mesh, exc.data)
        if target is not None and target.scale != 1.0:
            s = target.scale
            rep = EnergyReport(rep.density / s**2, rep.total / s**2, rep.pullback / s**2, rep.gradient_norm, rep.iterations, rep.converged, rep.history)
        return emap, rep


def stretch_factors(emap: EquivariantMap, mesh: Mesh) -> np.ndarray:
    """Per-face largest stretch ``sqrt(lambda_max(g^-1 h))`` of the map.

    Sampled at the corners, the barycentre and the quadrature points of each
    face, since the stretch of a Klein-affine map varies across the face.
    """
    geo = mesh_geometry(mesh)
    D = _face_differential(geo, emap.values)
    kd = mesh.klein[geo.faces]
    samples = np.concatenate([np.eye(3), np.full((1, 3), 1.0 / 3.0), geo.bary])
    best = np.zeros(mesh.n_faces)
    for lam in samples:
        p = np.einsum("a,fai->fi", lam, kd)
        if emap.target.is_line:
            M = np.einsum("fki,fkj->fij", D, D)
        else:
            q = np.einsum("a,fai->fi", lam, emap.values[geo.faces])
            M = np.einsum("fki,fkl,flj->fij", D, klein_metric(q), D)
        g = klein_metric(p)
        detg = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
        tr = (g[:, 1, 1] * M[:, 0, 0] + g[:, 0, 0] * M[:, 1, 1] - 2.0 * g[:, 0, 1] * M[:, 0, 1]) / detg
        det = (M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2) / detg
        lam_max = 0.5 * (tr + np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
        best = np.maximum(best, lam_max)
    return np.sqrt(best) / emap.target.scale


def transport_mesh(mesh: Mesh, rep: SurfaceRep, init: EquivariantMap | None = None, tol: float = 1e-10) -> tuple[Mesh, EquivariantMap]:
    """Carry ``mesh`` to the surface of the Fuchsian ``rep`` along the harmonic map.

    The combinatorics, pairings and vertex words are unchanged, so quantities
    computed on transported meshes vary smoothly with ``rep``.
    """
    emap, _ = solve_harmonic(mesh, rep, init=init, tol=tol, check_parabolic=False)
    k = emap.values
    x, y = klein_to_uhp(k)
    new = Mesh(np.stack([x, y], axis=1), mesh.faces.copy(), list(mesh.pairings), np.ones(mesh.n_faces), mesh.genus, mesh.master.copy(), list(mesh.vertex_words))
    new.conformal_factor = conformal_factors(new.centroids())
    areas = geodesic_triangle_areas(new.klein[new.faces])
    if np.any(areas <= 0):
        raise DegenerateFace("transported mesh has folded faces")
    return new, emap


def isometry_invariance_residual(emap: EquivariantMap, mesh: Mesh, g) -> float:
    """Largest change in the pullback after composing with the isometry ``g``."""
    M = so21_matrices(np.asarray(g.m if hasattr(g, "m") else g)[None])[0]
    rep = emap.constraint
    moved = EquivariantMap(emap.target, klein_action(M, emap.values), rep.conjugate(g) if isinstance(rep, SurfaceRep) else rep)
    return float(np.abs(pullback_metric(moved, mesh) - pullback_metric(emap, mesh)).max())


__all__ = [
    "DegenerateFace",
    "EnergyReport",
    "EquivariantMap",
    "HarmonicError",
    "MaxIterations",
    "MeshGeometry",
    "ParabolicTarget",
    "SingularMetric",
    "SingularSystem",
    "TargetKind",
    "TargetSpace",
    "axis_points",
    "constant_init",
    "default_init",
    "energy_density",
    "hopf_differential",
    "holomorphicity_residual",
    "identity_init",
    "pointwise_density",
    "pullback_metric",
    "reconstruct_pullback",
    "solve_any",
    "solve_harmonic",
    "solve_harmonic_line",
    "stretch_factors",
    "total_energy",
    "transport_mesh",
    "triangle_quadrature",
]

# keep the import list honest for static checkers
