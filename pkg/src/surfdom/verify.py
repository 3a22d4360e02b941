"""Invariant batteries run by ``surfdom verify <suite>``.

Each suite returns a list of :class:`Check` rows; a suite passes when every
row does.  Randomness is drawn from one seeded generator so that reruns are
identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hyperbolic import (
    BoundaryPoint,
    IsometryClass,
    MoebiusMap,
    Point,
    angle_at_vertex,
    apply,
    busemann,
    classify,
    comparison_angle,
    dist,
    horoflow,
    translation_length,
)

SUITES = ("busemann", "angles", "energy", "hopf", "properness", "identity", "continuity")
REFERENCE_FN = ([2.0, 2.2, 1.8], [0.1, -0.2, 0.3])


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: float

    def row(self) -> list:
        return [self.suite, self.name, "pass" if self.passed else "FAIL", self.value, self.threshold]


def _point(rng) -> Point:
    return Point(float(rng.uniform(-3, 3)), float(math.exp(rng.uniform(-2, 2))))


def _moebius(rng) -> MoebiusMap:
    while True:
        m = rng.normal(size=(2, 2))
        d = np.linalg.det(m)
        if abs(d) > 0.1:
            if d < 0:
                m[:, 0] *= -1
                d = -d
            return MoebiusMap(m / math.sqrt(d))


def _max_check(suite, name, values, threshold) -> Check:
    v = float(np.max(values)) if len(values) else 0.0
    return Check(suite, name, v <= threshold, v, threshold)


def horoflow_triple(rng) -> tuple[BoundaryPoint, Point, Point, float]:
    """A random ``(p, x, y, t)`` with ``p`` finite or infinite and ``t`` in ``[0, 6]``."""
    p = BoundaryPoint(float(rng.uniform(-2, 2))) if rng.random() < 0.8 else BoundaryPoint.infinity()
    return p, _point(rng), _point(rng), float(rng.uniform(0, 6))


def random_isometry(rng) -> MoebiusMap:
    """Elliptic, parabolic or hyperbolic with equal odds, randomly conjugated."""
    kind = rng.integers(3)
    if kind == 0:
        g = MoebiusMap.rotation(float(rng.uniform(0.05, 2 * math.pi - 0.05)))
    elif kind == 1:
        g = MoebiusMap(np.array([[1.0, float(rng.uniform(-5, 5))], [0.0, 1.0]]))
    else:
        lam = float(rng.uniform(0.05, 12))
        g = MoebiusMap(np.diag([math.exp(lam / 2), math.exp(-lam / 2)]))
    h = _moebius(rng)
    return h @ g @ h.inverse()


def suite_busemann(rng, **_) -> list[Check]:
    s = "busemann"
    inf = BoundaryPoint.infinity()
    i = Point(0.0, 1.0)
    pts = [_point(rng) for _ in range(100)]
    closed = [abs(busemann(inf, i, p) + math.log(p.y)) for p in pts]
    out = [_max_check(s, "closed form -ln y", closed, 1e-9)]
    coc = []
    bound = []
    for _ in range(100):
        p = BoundaryPoint(float(rng.uniform(-2, 2)))
        x0, x1, x = _point(rng), _point(rng), _point(rng)
        coc.append(abs(busemann(p, x0, x) - busemann(p, x0, x1) - busemann(p, x1, x)))
        bound.append(abs(busemann(p, x0, x)) - dist(x0, x))
    out.append(_max_check(s, "cocycle identity", coc, 1e-9))
    out.append(_max_check(s, "|B| <= dist", bound, 1e-12))
    lam = 0.7
    g = MoebiusMap(np.diag([math.exp(lam / 2), math.exp(-lam / 2)]))
    vals = np.array([busemann(inf, x, apply(g, x)) for x in pts])
    out.append(_max_check(s, "isometry identity spread", [float(np.ptp(vals))], 1e-8))
    out.append(_max_check(s, "isometry identity |value| = l(g)", [abs(abs(vals[0]) - translation_length(g))], 1e-10))
    worst_lo, worst_hi = [], []
    for _ in range(1000):
        p, x, y, t = horoflow_triple(rng)
        b = abs(busemann(p, x, y))
        d = dist(horoflow(p, t, x), horoflow(p, t, y))
        worst_lo.append(b - d)
        worst_hi.append(d - b - math.exp(-t) * dist(x, y))
    out.append(_max_check(s, "horoflow lower bound", worst_lo, 1e-8))
    out.append(_max_check(s, "horoflow contraction, global form", worst_hi, 1e-8))
    # first-order form: (d(Fx, Fy) - |B|) / d(x, y) <= e^-t as y -> x
    local = []
    for _ in range(300):
        p, x, _, t = horoflow_triple(rng)
        th = rng.uniform(0, 2 * math.pi)
        h = 1e-4
        y = Point(x.x + h * x.y * math.cos(th), x.y * math.exp(h * math.sin(th)))
        d = dist(horoflow(p, t, x), horoflow(p, t, y))
        local.append((d - abs(busemann(p, x, y))) / dist(x, y) - math.exp(-t))
    out.append(_max_check(s, "horoflow contraction, first order", local, 1e-3))
    lengths = [float(x) for x in rng.uniform(0.01, 20, 20)]
    tl = [abs(translation_length(MoebiusMap(np.diag([math.exp(l / 2), math.exp(-l / 2)]))) - l) for l in lengths]
    out.append(_max_check(s, "translation length of diag", tl, 1e-8))
    return out


def suite_angles(rng, **_) -> list[Check]:
    s = "angles"
    viol = []
    for _ in range(1000):
        x, y, z, t = (_point(rng) for _ in range(4))
        viol.append(angle_at_vertex(y, x, t) - angle_at_vertex(y, x, z) - angle_at_vertex(z, x, t))
    out = [_max_check(s, "angle triangle inequality", viol, 1e-9)]
    bad = 0
    for _ in range(20):
        a, b = rng.uniform(0.5, 2.0, 2)
        c = float(rng.uniform(abs(a - b) + 0.1, a + b - 0.1))
        prev = None
        for k in range(6):
            f = 2.0**k
            A, B, C = a * f, b * f, c * f
            ang = sorted([comparison_angle(A, B, C), comparison_angle(B, A, C), comparison_angle(C, A, B)])[:2]
            if prev is not None and (ang[0] > prev[0] or ang[1] > prev[1]):
                bad += 1
            prev = ang
    out.append(Check(s, "large-triangle angle collapse", bad == 0, float(bad), 0.0))
    misclass = 0
    tested = 0
    for _ in range(5000):
        g = random_isometry(rng)
        x = Point(float(rng.uniform(-3, 3)), float(math.exp(rng.uniform(-6, 6))))
        gx, gix = apply(g, x), apply(g.inverse(), x)
        if dist(x, gx) >= 10 and angle_at_vertex(gix, x, gx) >= 0.5:
            tested += 1
            misclass += classify(g) is not IsometryClass.HYPERBOLIC
    out.append(Check(s, f"hyperbolicity certificate ({tested} cases)", misclass == 0 and tested >= 50, float(misclass), 0.0))
    # distance to the axis of diag(e^{l/2}, e^{-l/2}) (the imaginary axis)
    excess = []
    for _ in range(500):
        lam = float(rng.uniform(0.1, 3.0))
        g = MoebiusMap(np.diag([math.exp(lam / 2), math.exp(-lam / 2)]))
        x = _point(rng)
        k = dist(x, apply(g, x))
        r = math.asinh(abs(x.x) / x.y)
        excess.append(r - math.acosh(max(math.sinh(k / 2) / math.sinh(lam / 2), 1.0)))
    out.append(_max_check(s, "axis proximity bound", excess, 1e-9))
    return out


def _reference():
    from .teichmuller.fenchel_nielsen import FNCoords, fn_to_holonomy

    X = FNCoords(np.array(REFERENCE_FN[0]), np.array(REFERENCE_FN[1]))
    return X, fn_to_holonomy(X)


def suite_energy(rng, target_edge: float = 0.1, mesh=None, **_) -> list[Check]:
    from .harmonic import identity_init, solve_harmonic
    from .teichmuller.mesh import build_mesh, check_mesh

    s = "energy"
    X, j = _reference()
    given = mesh is not None
    if not given:
        mesh = build_mesh(j, target_edge)
    diag = check_mesh(mesh, None if given else j)
    out = [
        Check(s, "pairing isometry", diag["pairing_length_mismatch"] < 1e-6, diag["pairing_length_mismatch"], 1e-6),
        Check(s, "every boundary edge paired once", diag["unpaired_boundary_edges"] + diag["multiply_paired_edges"] == 0,
              float(diag["unpaired_boundary_edges"] + diag["multiply_paired_edges"]), 0.0),
        Check(s, "area = 4 pi (Gauss-Bonnet)", diag["area_error"] < 0.01, diag["area_error"], 0.01),
    ]
    if "vertex_word_error" in diag:
        out.append(Check(s, "vertex words", diag["vertex_word_error"] < 1e-6, diag["vertex_word_error"], 1e-6))
    if given or not all(c.passed for c in out):
        # a mesh read from a file carries no holonomy to solve against
        return out
    _, rep = solve_harmonic(mesh, j, init=identity_init(mesh, j))
    err = abs(rep.total - 4 * math.pi) / (4 * math.pi)
    out.append(Check(s, "E(X, X) = 4 pi", err < 0.01, err, 0.01))
    return out


def suite_hopf(rng, target_edge: float = 0.2, **_) -> list[Check]:
    from .harmonic import (
        hopf_differential,
        holomorphicity_residual,
        identity_init,
        pointwise_density,
        pullback_metric,
        reconstruct_pullback,
        solve_harmonic,
    )
    from .teichmuller.mesh import build_mesh

    s = "hopf"
    X, j = _reference()
    mesh = build_mesh(j, target_edge)
    emap, rep = solve_harmonic(mesh, j, init=identity_init(mesh, j))
    out = [Check(s, "identity solve gradient", rep.gradient_norm < 1e-8, rep.gradient_norm, 1e-8)]
    phi = hopf_differential(emap, mesh)
    ratio = float(np.max(np.abs(phi.values) / mesh.conformal_factor))
    out.append(Check(s, "max |phi| / alpha", ratio < 1e-5, ratio, 1e-5))
    G = pullback_metric(emap, mesh)
    R = reconstruct_pullback(phi, pointwise_density(emap, mesh), mesh.conformal_factor)
    res = float(np.abs(R - G).max())
    out.append(Check(s, "pullback reconstruction", res < 1e-10, res, 1e-10))
    from .teichmuller.fenchel_nielsen import FNCoords, fn_to_holonomy

    j2 = fn_to_holonomy(FNCoords.from_vector(X.as_vector() + rng.uniform(-0.3, 0.3, 6)))
    e2, _ = solve_harmonic(mesh, j2, init=identity_init(mesh, j2))
    phi2 = hopf_differential(e2, mesh)
    hr = holomorphicity_residual(phi2, mesh)
    out.append(Check(s, "holomorphicity residual (harmonic map)", hr < 0.2, hr, 0.2))
    return out


def suite_properness(rng, target_edge: float = 0.3, **_) -> list[Check]:
    from .psi import PsiOptions, verify_properness_bound
    from .surface import axis_rep
    from .teichmuller.fenchel_nielsen import FNCoords

    X, j = _reference()
    rho = axis_rep(2, [0.1, 0.05, -0.08, 0.02])
    sample = [FNCoords.from_vector(X.as_vector() + rng.uniform(-0.4, 0.4, 6)) for _ in range(3)]
    rows, lip = verify_properness_bound(j, rho, sample, PsiOptions(target_edge=target_edge))
    out = [Check("properness", "upper Lipschitz estimate < 1", lip < 1, lip, 1.0)]
    for k, r in enumerate(rows):
        out.append(Check("properness", f"F >= (1 - Lip) E, sample {k}", r.holds, r.F - r.bound, 0.0))
    return out


def suite_identity(rng, target_edge: float = 0.3, **_) -> list[Check]:
    from .psi import PsiOptions, verify_energy_identity
    from .surface import SurfaceRep
    from .teichmuller.fenchel_nielsen import FNCoords

    X, j = _reference()
    out = []
    for k in range(2):
        X2 = FNCoords.from_vector(X.as_vector() + rng.uniform(-0.3, 0.3, 6))
        r = verify_energy_identity(X, X2, j, SurfaceRep.trivial(2), PsiOptions(target_edge=target_edge))
        out.append(Check("identity", f"energy comparison, sample {k}", r.mismatch < 0.03, r.mismatch, 0.03))
        out.append(Check("identity", f"F(X2) >= F(X1), sample {k}", r.monotone, r.F2 - r.F1, 0.0))
    return out


def suite_continuity(rng, target_edge: float = 0.3, **_) -> list[Check]:
    from .lipschitz import lip_continuity_probe
    from .surface import axis_rep
    from .teichmuller.mesh import build_mesh

    _, j = _reference()
    mesh = build_mesh(j, target_edge)
    base = np.array([0.1, 0.05, -0.08, 0.02])
    path = [axis_rep(2, base * (1 + 0.02 * k)) for k in range(6)]
    rows, jl, ju = lip_continuity_probe(j, path, 4, mesh)
    top = max(max(r.lower for r in rows), max(r.upper for r in rows))
    # a 2% change of the representation moves the bounds by about 2% of their size
    thr = 0.05 * top
    return [
        Check("continuity", "lower bound jump", jl <= thr, jl, thr),
        Check("continuity", "upper bound jump", ju <= thr, ju, thr),
        Check("continuity", "bracket on every step", all(r.lower <= r.upper + 1e-9 for r in rows), 0.0, 0.0),
    ]


_RUNNERS: dict[str, Callable[..., list[Check]]] = {
    "busemann": suite_busemann,
    "angles": suite_angles,
    "energy": suite_energy,
    "hopf": suite_hopf,
    "properness": suite_properness,
    "identity": suite_identity,
    "continuity": suite_continuity,
}


def run_suite(name: str, seed: int = 0, **kw) -> list[Check]:
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return _RUNNERS[name](np.random.default_rng(seed), **kw)


__all__ = ["Check", "SUITES", "run_suite"]
