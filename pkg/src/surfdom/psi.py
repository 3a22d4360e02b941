"""The functional ``F(X) = E(X, j0) - E(X, rho)`` over Teichmueller space.

Energies are computed on meshes transported from a reference mesh along
harmonic maps, so for nearby ``X`` the discretisation changes smoothly and
finite differences in Fenchel-Nielsen coordinates are meaningful.  The
minimiser of ``F`` is the preimage of ``j0`` under ``Psi_rho``; the forward map
``Psi_rho`` matches Hopf differentials.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .harmonic import (
    DegenerateFace,
    EquivariantMap,
    HarmonicError,
    TargetSpace,
    constant_init,
    hopf_differential,
    identity_init,
    pullback_metric,
    solve_harmonic,
    solve_harmonic_line,
    transport_mesh,
)
from .hyperbolic import klein_action, so21_matrices
from .surface import SurfaceRep, Word, detect_parabolic, enumerate_ball, euler_class
from .teichmuller.fenchel_nielsen import FNCoords, fn_to_holonomy
from .teichmuller.mesh import Mesh, build_mesh
from .teichmuller.weil_petersson import QuadDiff, wp_norm, wp_pair

log = logging.getLogger(__name__)


class PsiError(RuntimeError):
    pass


class ResidualFloor(PsiError):
    """The Hopf residual stopped decreasing above the requested tolerance."""

    def __init__(self, msg: str, result=None):
        super().__init__(msg)
        self.result = result


class NotCritical(PsiError):
    pass


class MaxIterations(PsiError):
    def __init__(self, msg: str, result=None):
        super().__init__(msg)
        self.result = result


class NotProperWarning(RuntimeWarning):
    """``F`` fell below the bound ``(1 - Lip) E(., j0)``: a numerical fault."""


@dataclass
class PsiOptions:
    target_edge: float = 0.3
    fd_step: float = 1e-4
    tol: float = 1e-6
    max_iter: int = 100
    radius: int = 4
    solver_tol: float = 1e-10
    # relative Hopf residual and absolute floor (times the area) for psi_forward
    hopf_rel_tol: float = 1e-3
    hopf_abs_tol: float = 1e-8
    # a move larger than this in FN coordinates triggers a new reference mesh
    reanchor: float = 0.6


@dataclass
class FunctionalEval:
    X: FNCoords
    E_j0: float
    E_rho: float
    F: float
    grad: QuadDiff | None = field(default=None, repr=False)
    grad_fd: np.ndarray | None = None


@dataclass
class PsiResult:
    argmin: FNCoords
    F_min: float
    grad_norm_at_exit: float
    iterations: int
    path: list[FunctionalEval]
    converged: bool = True


def _key(X) -> tuple:
    v = X.as_vector() if isinstance(X, FNCoords) else np.asarray(X, dtype=float)
    return tuple(np.round(v, 14).tolist())


class Landscape:
    """Energies ``E(X, rho)`` for ``X`` near a reference point.

    The mesh of ``X`` is the image of the reference mesh under the harmonic
    map to the holonomy of ``X``; solutions are warm started from the nearest
    point already visited.
    """

    def __init__(self, X_ref: FNCoords, target_edge: float = 0.3, solver_tol: float = 1e-10, cache: int = 64):
        self.X_ref = X_ref
        self.target_edge = target_edge
        self.solver_tol = solver_tol
        self.mesh_ref = build_mesh(fn_to_holonomy(X_ref), target_edge)
        self._meshes: dict[tuple, tuple[Mesh, EquivariantMap | None]] = {_key(X_ref): (self.mesh_ref, None)}
        self._solutions: dict[tuple, EquivariantMap] = {}
        self._kinds: dict[int, object] = {}
        self._cache = cache

    @staticmethod
    def _nearest(store: dict, key: tuple, filt=None):
        best, bd = None, math.inf
        v = np.array(key[-1] if filt else key)
        for k, val in store.items():
            if filt is not None:
                if k[0] != filt:
                    continue
                d = float(np.linalg.norm(np.array(k[1]) - v))
            else:
                d = float(np.linalg.norm(np.array(k) - v))
            if d < bd:
                best, bd = val, d
        return best

    def _trim(self, store: dict):
        while len(store) > self._cache:
            store.pop(next(iter(store)))

    def mesh(self, X: FNCoords) -> Mesh:
        key = _key(X)
        hit = self._meshes.get(key)
        if hit is not None:
            return hit[0]
        near = self._nearest({k: v for k, v in self._meshes.items() if v[1] is not None}, key)
        init = near[1] if near is not None else None
        mesh, emap = transport_mesh(self.mesh_ref, fn_to_holonomy(X), init=init, tol=self.solver_tol)
        self._meshes[key] = (mesh, emap)
        self._trim(self._meshes)
        return mesh

    def _kind(self, rho: SurfaceRep):
        k = self._kinds.get(id(rho))
        if k is None:
            k = ("plane", None)
            data = detect_parabolic(rho)
            if data is not None:
                k = ("interior", data) if not data.is_boundary else ("line", data)
            self._kinds[id(rho)] = k
        return k

    def solve(self, X: FNCoords, rho: SurfaceRep) -> tuple[float, EquivariantMap, Mesh]:
        mesh = self.mesh(X)
        kind, data = self._kind(rho)
        if kind == "interior":
            emap = constant_init(mesh, rho, data.fixed_point)
            return 0.0, emap, mesh
        if kind == "line":
            emap, rep = solve_harmonic_line(mesh, data)
            return rep.total, emap, mesh
        key = (id(rho), _key(X))
        hit = self._solutions.get(key)
        if hit is None:
            init = self._nearest(self._solutions, key, filt=id(rho))
            if init is None:
                init = identity_init(mesh, rho) if abs(euler_class(rho)) == 2 * rho.genus - 2 else constant_init(mesh, rho)
            emap, rep = solve_harmonic(mesh, rho, init=init, tol=self.solver_tol, check_parabolic=False)
            self._solutions[key] = emap
            self._trim(self._solutions)
            hit = emap
        from .harmonic import total_energy

        return total_energy(hit, mesh).total, hit, mesh

    def energy(self, X: FNCoords, rho: SurfaceRep) -> float:
        return self.solve(X, rho)[0]

    def hopf(self, X: FNCoords, rho: SurfaceRep) -> QuadDiff:
        _, emap, mesh = self.solve(X, rho)
        if self._kind(rho)[0] == "interior":
            return QuadDiff(np.zeros(mesh.n_faces))
        return hopf_differential(emap, mesh)


def _coords(v) -> FNCoords:
    return FNCoords.from_vector(v)


def eval_F(X: FNCoords, j0: SurfaceRep, rho: SurfaceRep, opts: PsiOptions | None = None,
           landscape: Landscape | None = None, with_grad: bool = True) -> FunctionalEval:
    """Energies, ``F`` and the Hopf-difference gradient ``-Phi(X, j0) + Phi(X, rho)``."""
    opts = opts or PsiOptions()
    land = landscape or Landscape(X, opts.target_edge, opts.solver_tol)
    e0 = land.energy(X, j0)
    er = land.energy(X, rho)
    grad = None
    if with_grad:
        grad = land.hopf(X, rho) - land.hopf(X, j0)
    return FunctionalEval(X, e0, er, e0 - er, grad)


def _fd_gradient(fun, v: np.ndarray, h: float) -> np.ndarray:
    g = np.empty(len(v))
    for i in range(len(v)):
        e = np.zeros(len(v))
        e[i] = h
        g[i] = (fun(v + e) - fun(v - e)) / (2.0 * h)
    return g


@dataclass
class GradientCheck:
    X: FNCoords
    dF: np.ndarray
    pairing: np.ndarray
    h: float
    mismatch: float = math.nan
    constant: float = math.nan


def hopf_variations(X: FNCoords, mesh: Mesh, h: float, solver_tol: float = 1e-10) -> list[QuadDiff]:
    """``d Phi(X, j_Y) / dY_i`` at ``Y = X`` by central differences, on a fixed mesh."""
    v = X.as_vector()
    out = []
    for i in range(len(v)):
        phis = []
        for sgn in (1.0, -1.0):
            w = v.copy()
            w[i] += sgn * h
            j = fn_to_holonomy(_coords(w))
            emap, _ = solve_harmonic(mesh, j, init=identity_init(mesh, j), tol=solver_tol, check_parabolic=False)
            phis.append(hopf_differential(emap, mesh))
        out.append((phis[0] - phis[1]) * (1.0 / (2.0 * h)))
    return out


def wp_gradient_check(X: FNCoords, j0: SurfaceRep, rho: SurfaceRep, h: float = 1e-3,
                      opts: PsiOptions | None = None) -> GradientCheck:
    """Finite differences of ``F`` against the WP pairing of the Hopf-difference
    gradient with the coordinate variations of ``Phi(X, .)``."""
    opts = opts or PsiOptions()
    land = Landscape(X, opts.target_edge, opts.solver_tol)
    v = X.as_vector()

    def F(w):
        Y = _coords(w)
        return land.energy(Y, j0) - land.energy(Y, rho)

    dF = _fd_gradient(F, v, h)
    grad = land.hopf(X, rho) - land.hopf(X, j0)
    mesh = land.mesh_ref
    areas = mesh.face_areas()
    mus = hopf_variations(X, mesh, h, opts.solver_tol)
    pairing = np.array([wp_pair(grad, mu, mesh, areas).real for mu in mus])
    return GradientCheck(X, dF, pairing, h)


def calibrate_gradient(checks: Sequence[GradientCheck]) -> tuple[float, list[float]]:
    """Fit one constant ``c`` with ``dF = c * pairing`` over all checks; return
    it with each check's relative mismatch ``|dF - c pairing| / |dF|``."""
    a = np.concatenate([c.pairing for c in checks])
    b = np.concatenate([c.dF for c in checks])
    c = float(a @ b / (a @ a)) if a @ a > 0 else math.nan
    mism = []
    for chk in checks:
        r = float(np.linalg.norm(chk.dF - c * chk.pairing) / max(np.linalg.norm(chk.dF), 1e-300))
        chk.mismatch, chk.constant = r, c
        mism.append(r)
    return c, mism


def _upper_lip(j0: SurfaceRep, rho: SurfaceRep, target_edge: float) -> float:
    from .lipschitz import lip_upper

    mesh = build_mesh(j0, target_edge)
    return lip_upper(j0, rho, mesh)[0]


def minimize_F(j0: SurfaceRep, rho: SurfaceRep, init: FNCoords, opts: PsiOptions | None = None,
               lip_hat: float | None = None) -> PsiResult:
    """Minimise ``F_{j0, rho}`` over Fenchel-Nielsen coordinates (BFGS with
    central-difference gradients)."""
    opts = opts or PsiOptions()
    if lip_hat is None:
        lip_hat = _upper_lip(j0, rho, opts.target_edge)
    if lip_hat >= 1.0:
        warnings.warn(f"upper Lipschitz estimate {lip_hat:.4f} >= 1: F need not be proper", NotProperWarning)
    path: list[FunctionalEval] = []
    x = init.as_vector()
    total_iter = 0
    gnorm = math.inf
    converged = False
    for _ in range(6):
        land = Landscape(_coords(x), opts.target_edge, opts.solver_tol)
        values: dict[tuple, tuple[float, float]] = {}

        def energies(w):
            k = _key(w)
            if k not in values:
                Y = _coords(w)
                values[k] = (land.energy(Y, j0), land.energy(Y, rho))
                e0, er = values[k]
                slack = 2e-3 * e0
                if e0 - er < (1.0 - min(lip_hat, 1.0)) * e0 - slack:
                    warnings.warn(f"F = {e0 - er:.6g} below the properness bound at {list(w)}", NotProperWarning)
            return values[k]

        def fun(w):
            try:
                e0, er = energies(w)
            except (HarmonicError, DegenerateFace, ValueError) as exc:
                log.debug("evaluation failed at %s: %s", w, exc)
                return math.inf
            return e0 - er

        def jac(w):
            return _fd_gradient(fun, w, opts.fd_step)

        def record(w):
            e0, er = energies(w)
            path.append(FunctionalEval(_coords(w), e0, er, e0 - er))

        record(x)
        res = minimize(fun, x, jac=jac, method="BFGS", callback=record,
                       options={"gtol": opts.tol, "maxiter": opts.max_iter})
        total_iter += int(res.nit)
        moved = float(np.linalg.norm(res.x - x))
        x = res.x
        gnorm = float(np.linalg.norm(jac(x)))
        if gnorm < opts.tol or (res.success and moved < opts.reanchor):
            converged = gnorm < opts.tol or res.success
            if moved < opts.reanchor:
                break
        # the reference mesh is now far from the iterate: start again from there
    X = _coords(x)
    e0, er = path[-1].E_j0, path[-1].E_rho
    result = PsiResult(X, e0 - er, gnorm, total_iter, path, converged)
    if not converged:
        raise MaxIterations(f"F not minimised after {total_iter} iterations (|grad| = {gnorm:.3g})", result)
    return result


def psi_forward(X: FNCoords, rho: SurfaceRep, opts: PsiOptions | None = None) -> FNCoords:
    """``Psi_rho(X)``: the Fuchsian ``j`` whose Hopf differential on ``X``
    matches that of ``rho``.

    Gauss-Newton in Fenchel-Nielsen coordinates on the WP residual
    ``Phi(X, j_Y) - Phi(X, rho)``.  Discrete Hopf differentials carry
    components outside the ``6g-6``-dimensional family, so convergence is
    measured on the residual projected onto the span of the variations.
    """
    return psi_forward_report(X, rho, opts)[0]


@dataclass
class ForwardReport:
    iterations: int
    projected_residual: float
    full_residual: float
    target_norm: float


def psi_forward_report(X: FNCoords, rho: SurfaceRep, opts: PsiOptions | None = None) -> tuple[FNCoords, ForwardReport]:
    opts = opts or PsiOptions()
    jX = fn_to_holonomy(X)
    mesh = build_mesh(jX, opts.target_edge)
    areas = mesh.face_areas()
    area = float(areas.sum())
    data = detect_parabolic(rho)
    if data is not None and not data.is_boundary:
        phi_rho = QuadDiff(np.zeros(mesh.n_faces))
    elif data is not None:
        emap, _ = solve_harmonic_line(mesh, data)
        phi_rho = hopf_differential(emap, mesh)
    else:
        emap, _ = solve_harmonic(mesh, rho, tol=opts.solver_tol, check_parabolic=False)
        phi_rho = hopf_differential(emap, mesh)
    target_norm = wp_norm(phi_rho, mesh, areas)
    goal = max(opts.hopf_rel_tol * target_norm, opts.hopf_abs_tol * area)
    y = X.as_vector()
    h = opts.fd_step * 10
    prev = math.inf
    full = math.nan
    for it in range(opts.max_iter):
        j = fn_to_holonomy(_coords(y))
        emap, _ = solve_harmonic(mesh, j, init=identity_init(mesh, j), tol=opts.solver_tol, check_parabolic=False)
        R = hopf_differential(emap, mesh) - phi_rho
        full = wp_norm(R, mesh, areas)
        J = []
        for i in range(len(y)):
            phis = []
            for sgn in (1.0, -1.0):
                w = y.copy()
                w[i] += sgn * h
                jj = fn_to_holonomy(_coords(w))
                em, _ = solve_harmonic(mesh, jj, init=emap, tol=opts.solver_tol, check_parabolic=False)
                phis.append(hopf_differential(em, mesh))
            J.append((phis[0] - phis[1]) * (1.0 / (2.0 * h)))
        A = np.array([[wp_pair(a, b, mesh, areas).real for b in J] for a in J])
        b = np.array([wp_pair(a, R, mesh, areas).real for a in J])
        delta = np.linalg.solve(A, -b)
        proj = math.sqrt(max(float(b @ np.linalg.solve(A, b)), 0.0))
        log.debug("psi_forward it %d: projected %.3g full %.3g goal %.3g", it, proj, full, goal)
        if proj < goal:
            return _coords(y), ForwardReport(it, proj, full, target_norm)
        if proj > 0.9 * prev and it > 3:
            raise ResidualFloor(f"projected Hopf residual stalled at {proj:.3g} (goal {goal:.3g})",
                                (_coords(y), ForwardReport(it, proj, full, target_norm)))
        prev = proj
        # damp steps that would leave the coordinate domain
        t = 1.0
        while True:
            try:
                _coords(y + t * delta)
                break
            except ValueError:
                t *= 0.5
        y = y + t * delta
    raise ResidualFloor("psi_forward did not converge", (_coords(y), ForwardReport(opts.max_iter, prev, full, target_norm)))


# ---------------------------------------------------------------------------
# verification identities


@dataclass
class PropernessRow:
    X: FNCoords
    F: float
    E_j0: float
    bound: float
    holds: bool


def verify_properness_bound(j0: SurfaceRep, rho: SurfaceRep, sample: Sequence[FNCoords],
                            opts: PsiOptions | None = None, lip_hat: float | None = None,
                            mesh_tol: float = 1e-3) -> tuple[list[PropernessRow], float]:
    """Check ``F(X) >= (1 - Lip) E(X, j0) - slack`` with ``slack = 2 mesh_tol E``."""
    opts = opts or PsiOptions()
    if lip_hat is None:
        lip_hat = _upper_lip(j0, rho, opts.target_edge)
    rows = []
    for X in sample:
        land = Landscape(X, opts.target_edge, opts.solver_tol)
        e0 = land.energy(X, j0)
        er = land.energy(X, rho)
        bound = (1.0 - lip_hat) * e0 - 2.0 * mesh_tol * e0
        rows.append(PropernessRow(X, e0 - er, e0, bound, e0 - er >= bound))
    return rows, lip_hat


def _locate(points: np.ndarray, tri_klein: np.ndarray, rep: SurfaceRep, words: list[Word]):
    """Find, for every Klein point ``p``, a word ``w`` and a triangle containing
    ``rep(w) p``; returns (triangle index, barycentric coordinates, word index)."""
    n = len(points)
    tri_idx = -np.ones(n, dtype=np.int64)
    bary = np.zeros((n, 3))
    word_idx = -np.ones(n, dtype=np.int64)
    cent = tri_klein.mean(axis=1)
    tree = cKDTree(cent)
    a = tri_klein[:, 0]
    T = np.stack([tri_klein[:, 1] - a, tri_klein[:, 2] - a], axis=2)
    Tinv = np.linalg.inv(T)
    mats = so21_matrices(np.array([rep.matrix(w) for w in words]))
    kq = min(16, len(tri_klein))
    for wi in range(len(words)):
        pending = np.flatnonzero(tri_idx < 0)
        if len(pending) == 0:
            break
        q = klein_action(mats[wi], points[pending])
        _, cand = tree.query(q, k=kq)
        cand = np.atleast_2d(cand)
        for c in range(kq):
            t = cand[:, c]
            lam = np.einsum("nij,nj->ni", Tinv[t], q - a[t])
            l0 = 1.0 - lam.sum(axis=1)
            inside = (lam.min(axis=1) >= -1e-10) & (l0 >= -1e-10) & (tri_idx[pending] < 0)
            sel = pending[inside]
            tri_idx[sel] = t[inside]
            bary[sel] = np.stack([l0[inside], lam[inside, 0], lam[inside, 1]], axis=1)
            word_idx[sel] = wi
    return tri_idx, bary, word_idx


def inverse_map_values(mesh2: Mesh, image2: np.ndarray, j0: SurfaceRep, j2: SurfaceRep, points: np.ndarray,
                       max_radius: int = 6) -> np.ndarray:
    """Evaluate ``k^-1`` at Klein points, where ``k`` is the piecewise Klein-affine
    map from ``mesh2`` (holonomy ``j2``) with vertex images ``image2`` (``j0``-equivariant).

    Points outside the image domain are moved in by words of growing length.
    """
    tri = image2[mesh2.faces]
    n = len(points)
    t = -np.ones(n, dtype=np.int64)
    lam = np.zeros((n, 3))
    word_of: list[Word | None] = [None] * n
    seen = 0
    for radius in range(0, max_radius + 1):
        pending = np.flatnonzero(t < 0)
        if len(pending) == 0:
            break
        words = [Word(())] if radius == 0 else enumerate_ball(j0.group, radius)[seen - 1 :]
        seen += len(words)
        ti, li, wi = _locate(points[pending], tri, j0, words)
        hit = ti >= 0
        t[pending[hit]] = ti[hit]
        lam[pending[hit]] = li[hit]
        for k, w in zip(pending[hit], wi[hit]):
            word_of[k] = words[w]
    if np.any(t < 0):
        raise HarmonicError(f"{int(np.sum(t < 0))} points could not be located in the image mesh")
    src = mesh2.klein[mesh2.faces[t]]
    y = np.einsum("na,nai->ni", lam, src)
    out = np.empty_like(y)
    groups: dict[Word, list[int]] = {}
    for k, w in enumerate(word_of):
        groups.setdefault(w, []).append(k)
    for w, idx in groups.items():
        inv = np.linalg.inv(j2.matrix(w))
        out[idx] = klein_action(so21_matrices(inv[None])[0], y[idx])
    return out


@dataclass
class EnergyIdentityReport:
    lhs: float
    rhs: float
    mismatch: float
    F1: float
    F2: float
    hopf_mismatch: float

    @property
    def monotone(self) -> bool:
        return self.F2 >= self.F1 - 1e-9 * abs(self.F1)


def verify_energy_identity(X1: FNCoords, X2: FNCoords, j0: SurfaceRep, rho: SurfaceRep,
                           opts: PsiOptions | None = None, critical_tol: float = 1e-2) -> EnergyIdentityReport:
    """Evaluate both sides of the energy comparison identity on the mesh of ``X1``.

    ``g1`` is the metric of ``X1``; ``g0`` and ``f*g_M`` are the pullbacks by the
    harmonic maps from ``X1`` to ``j0`` and to ``rho``; ``g2`` is the metric of
    ``X2`` transported so that the identity ``(S, g2) -> (S, g0)`` is harmonic.
    The left side uses ``E(X2, j0)`` from a solve on the mesh of ``X2``.
    """
    opts = opts or PsiOptions()
    j1 = fn_to_holonomy(X1)
    j2 = fn_to_holonomy(X2)
    m1 = build_mesh(j1, opts.target_edge)
    u, rep_u = solve_harmonic(m1, j0, init=identity_init(m1, j0), tol=opts.solver_tol, check_parabolic=False)
    G0 = pullback_metric(u, m1)
    data = detect_parabolic(rho)
    if data is not None and not data.is_boundary:
        Gf = np.zeros_like(G0)
        E1_rho = 0.0
        phi_f = QuadDiff(np.zeros(m1.n_faces))
    elif data is not None:
        f, rf = solve_harmonic_line(m1, data)
        Gf, E1_rho, phi_f = pullback_metric(f, m1), rf.total, hopf_differential(f, m1)
    else:
        f, rf = solve_harmonic(m1, rho, tol=opts.solver_tol, check_parabolic=False)
        Gf, E1_rho, phi_f = pullback_metric(f, m1), rf.total, hopf_differential(f, m1)
    areas = m1.face_areas()
    hm = wp_norm(hopf_differential(u, m1) - phi_f, m1, areas)
    if hm > critical_tol:
        raise NotCritical(f"Hopf differentials at X1 differ by {hm:.3g} (tolerance {critical_tol})")
    m2 = build_mesh(j2, opts.target_edge)
    k, rep_k = solve_harmonic(m2, j0, init=identity_init(m2, j0), tol=opts.solver_tol, check_parabolic=False)
    # g2 on the surface of X1: pull back the metric of X2 by k^-1 o u
    s_vals = inverse_map_values(m2, k.values, j0, j2, u.values)
    s = EquivariantMap(TargetSpace.hyperbolic_plane(), s_vals, j2)
    G2 = pullback_metric(s, m1)
    alpha = m1.conformal_factor
    dxdy = areas / alpha
    e0 = 0.5 * (G0[:, 0, 0] + G0[:, 1, 1]) / alpha
    ef = 0.5 * (Gf[:, 0, 0] + Gf[:, 1, 1]) / alpha
    e2 = 0.5 * (G2[:, 0, 0] + G2[:, 1, 1]) / alpha
    psi = 0.25 * (G2[:, 0, 0] - G2[:, 1, 1] - 2j * G2[:, 0, 1])
    factor = 1.0 / np.sqrt(1.0 - 4.0 * np.abs(psi) ** 2 / (alpha**2 * e2**2))
    rhs = float(np.sum(factor * (e0 - ef) * areas))
    det2 = G2[:, 0, 0] * G2[:, 1, 1] - G2[:, 0, 1] ** 2
    tr_f = (G2[:, 1, 1] * Gf[:, 0, 0] + G2[:, 0, 0] * Gf[:, 1, 1] - 2.0 * G2[:, 0, 1] * Gf[:, 0, 1]) / det2
    E2_f = float(np.sum(0.5 * tr_f * np.sqrt(det2) * dxdy))
    lhs = rep_k.total - E2_f
    F1 = rep_u.total - E1_rho
    land = Landscape(X2, opts.target_edge, opts.solver_tol)
    F2 = rep_k.total - land.energy(X2, rho)
    return EnergyIdentityReport(lhs, rhs, abs(lhs - rhs) / max(abs(lhs), 1e-300), F1, F2, hm)


@dataclass
class ContinuityStep:
    step: int
    argmin: FNCoords
    F_min: float
    displacement: float


def minimizer_continuity_experiment(path: Sequence[tuple[SurfaceRep, SurfaceRep]], init: FNCoords,
                                    opts: PsiOptions | None = None) -> list[ContinuityStep]:
    """Argmin of ``F_{j0, rho}`` along a path, warm started step to step."""
    opts = opts or PsiOptions()
    rows = []
    x = init
    prev = None
    for k, (j0, rho) in enumerate(path):
        res = minimize_F(j0, rho, x, opts)
        disp = 0.0 if prev is None else float(np.linalg.norm(res.argmin.as_vector() - prev.as_vector()))
        rows.append(ContinuityStep(k, res.argmin, res.F_min, disp))
        prev = x = res.argmin
    return rows


def energy_along_ray(j0: SurfaceRep, X0: FNCoords, direction: np.ndarray, ts: Sequence[float],
                     opts: PsiOptions | None = None) -> np.ndarray:
    """``E(X0 + t direction, j0)`` on freshly built meshes."""
    opts = opts or PsiOptions()
    out = []
    for t in ts:
        X = _coords(X0.as_vector() + t * np.asarray(direction, dtype=float))
        mesh = build_mesh(fn_to_holonomy(X), opts.target_edge)
        _, rep = solve_harmonic(mesh, j0, tol=opts.solver_tol, check_parabolic=False)
        out.append(rep.total)
    return np.array(out)


__all__ = [
    "EnergyIdentityReport",
    "ForwardReport",
    "FunctionalEval",
    "GradientCheck",
    "Landscape",
    "MaxIterations",
    "NotCritical",
    "NotProperWarning",
    "PsiOptions",
    "PsiResult",
    "ResidualFloor",
    "calibrate_gradient",
    "energy_along_ray",
    "eval_F",
    "hopf_variations",
    "inverse_map_values",
    "minimize_F",
    "minimizer_continuity_experiment",
    "psi_forward",
    "psi_forward_report",
    "verify_energy_identity",
    "verify_properness_bound",
    "wp_gradient_check",
]
