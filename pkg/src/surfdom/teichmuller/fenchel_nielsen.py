"""Fenchel-Nielsen coordinates and the Fuchsian holonomy they determine.

Each handle ``(a_i, b_i)`` is a one-holed torus whose holonomy is written
down from the trace coordinates ``(tr A, tr B, tr AB)``; handles are glued
along their boundary curves ``c_i = [a_i, b_i]`` either directly (genus 2)
or to a chain of pairs of pants (genus >= 3).

Pants curves are ordered ``a_1..a_g`` followed by ``c_1`` (genus 2) or
``c_1..c_g`` and the chain curves ``d_2..d_{g-2}`` (genus >= 3), where
``d_k`` is freely homotopic to ``c_1 c_2 ... c_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..hyperbolic import BoundaryPoint, MoebiusMap, fixed_points
from ..surface import SurfaceRep, Word, evaluate

MIN_LENGTH = 1e-4


class DegenerateLength(ValueError):
    pass


@dataclass(frozen=True)
class FNCoords:
    lengths: tuple[float, ...]
    twists: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        object.__setattr__(self, "twists", tuple(float(x) for x in self.twists))
        if len(self.lengths) != len(self.twists) or len(self.lengths) % 3 != 0 or len(self.lengths) < 3:
            raise ValueError("need 3g-3 lengths and as many twists")
        for x in self.lengths:
            if not x >= MIN_LENGTH:
                raise DegenerateLength(f"pants curve length {x} below {MIN_LENGTH}")

    @property
    def genus(self) -> int:
        return len(self.lengths) // 3 + 1

    def as_vector(self) -> np.ndarray:
        return np.array(self.lengths + self.twists)

    @classmethod
    def from_vector(cls, v) -> "FNCoords":
        v = np.asarray(v, dtype=float)
        n = len(v) // 2
        return cls(tuple(v[:n]), tuple(v[n:]))


def pants_curve_words(genus: int) -> list[Word]:
    """Words representing the pants curves, in coordinate order."""
    a = [Word((2 * i + 1,)) for i in range(genus)]
    c = [Word((2 * i + 1, 2 * i + 2, -(2 * i + 1), -(2 * i + 2))) for i in range(genus)]
    if genus == 2:
        return a + [c[0]]
    d = []
    for k in range(2, genus - 1):
        w = Word(())
        for i in range(k):
            w = w * c[i]
        d.append(w)
    return a + c + d


def _torus(la: float, lc: float, twist: float) -> tuple[np.ndarray, np.ndarray]:
    """Generators ``A, B`` of a one-holed torus with ``tr A = 2 cosh(la/2)``,
    ``tr [A,B] = -2 cosh(lc/2)`` and twist ``twist`` along ``a``.

    Twisting by a full ``la`` replaces ``B`` by ``B A``.
    """
    u = la / 2.0
    r = 2.0 * math.sqrt(1.0 + math.cosh(lc / 4.0) ** 2 / math.sinh(u) ** 2)
    y = r * math.cosh(twist / 2.0)
    z = r * math.cosh(twist / 2.0 + u)
    lam = math.exp(u)
    A = np.diag([lam, 1.0 / lam])
    p = (z - y / lam) / (lam - 1.0 / lam)
    s = y - p
    qr = p * s - 1.0
    q = math.sqrt(abs(qr))
    B = np.array([[p, q], [qr / q, s]])
    return A, B


def _comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b @ np.linalg.inv(a) @ np.linalg.inv(b)


def _pants(l1: float, l2: float, l3: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary holonomies ``P1 P2 P3 = I`` of a pair of pants, all traces negative."""
    t1, t2, t3 = (-2.0 * math.cosh(l / 2.0) for l in (l1, l2, l3))
    lam = math.exp(l1 / 2.0)
    P1 = -np.diag([lam, 1.0 / lam])
    # tr P2 = t2 and tr(P1 P2) = tr(P3^-1) = t3
    p = (t3 + t2 / lam) / (-lam + 1.0 / lam)
    s = t2 - p
    qr = p * s - 1.0
    # the sign of q fixes which side of the cuffs the pants lie on
    q = -math.sqrt(abs(qr))
    P2 = np.array([[p, q], [qr / q, s]])
    P3 = np.linalg.inv(P1 @ P2)
    return P1, P2, P3


def _normalizer(m: np.ndarray, marker: np.ndarray) -> np.ndarray:
    """SL(2,R) matrix ``K`` with ``K m K^-1`` diagonal (attracting point at
    infinity) and the foot of the perpendicular from ``axis(marker)`` to
    ``axis(m)`` sent to ``i``."""
    g = MoebiusMap(m)
    rep, att = fixed_points(g)
    K = _send_to_zero_inf(rep, att)
    # foot of the common perpendicular in normalised coordinates: the point
    # of the imaginary axis at height sqrt(|x1 x2|) for the image endpoints x1, x2
    mk = MoebiusMap(K) @ MoebiusMap(marker) @ MoebiusMap(K).inverse()
    e1, e2 = fixed_points(mk)
    h = math.sqrt(abs(e1.x * e2.x))
    return np.diag([1.0 / math.sqrt(h), math.sqrt(h)]) @ K


def _send_to_zero_inf(rep: BoundaryPoint, att: BoundaryPoint) -> np.ndarray:
    if att.is_infinite:
        K = np.array([[1.0, -rep.x], [0.0, 1.0]])
    elif rep.is_infinite:
        K = np.array([[0.0, -1.0], [1.0, -att.x]])
    else:
        K = np.array([[1.0, -rep.x], [1.0, -att.x]])
    det = np.linalg.det(K)
    if det < 0:
        K[0] = -K[0]
        det = -det
    return K / math.sqrt(det)


def _glue(target: np.ndarray, target_marker: np.ndarray, source: np.ndarray, source_marker: np.ndarray, twist: float) -> np.ndarray:
    """Matrix ``H`` with ``H source H^-1 = target``, shifted by ``twist`` along
    the common axis from the position where the marked feet coincide."""
    Kt = _normalizer(target, target_marker)
    Ks = _normalizer(source, source_marker)
    T = np.diag([math.exp(twist / 2.0), math.exp(-twist / 2.0)])
    H = np.linalg.inv(Kt) @ T @ Ks
    return H


def fn_to_holonomy(coords: FNCoords, center: bool = True) -> SurfaceRep:
    """Fuchsian holonomy of the marked surface with the given coordinates.

    With ``center`` the result is conjugated so that ``i`` is a balanced base
    point (see :func:`~.dirichlet.balanced_base_point`), which keeps the
    Dirichlet domain about ``i`` compact in the Klein chart.
    """
    rep = _holonomy(coords)
    if not center:
        return rep
    from .dirichlet import balanced_base_point, centering_isometry

    return rep.conjugate(centering_isometry(balanced_base_point(rep)))


def _holonomy(coords: FNCoords) -> SurfaceRep:
    g = coords.genus
    L, T = coords.lengths, coords.twists
    if g == 2:
        la1, la2, lc = L
        ta1, ta2, tc = T
        A1, B1 = _torus(la1, lc, ta1)
        A2, B2 = _torus(la2, lc, ta2)
        C1 = _comm(A1, B1)
        C2 = _comm(A2, B2)
        H = _glue(np.linalg.inv(C1), A1, C2, A2, tc)
        Hi = np.linalg.inv(H)
        mats = [A1, B1, H @ A2 @ Hi, H @ B2 @ Hi]
        return SurfaceRep.from_matrices(2, mats)
    la, lc, ld = L[:g], L[g : 2 * g], L[2 * g :]
    ta, tc, td = T[:g], T[g : 2 * g], T[2 * g :]
    tori = [_torus(la[i], lc[i], ta[i]) for i in range(g)]
    comms = [_comm(A, B) for A, B in tori]
    # pants chain: P_1 has cuffs c_1, c_2, d_2^-1; P_k has d_k, c_{k+1}, d_{k+1}^-1;
    # the last has d_{g-2}, c_{g-1}, c_g
    cuffs = [lc[0]] + list(ld) + [lc[g - 1]]
    pants = []
    for k in range(g - 2):
        pants.append(_pants(cuffs[k], lc[k + 1], cuffs[k + 1]))
    # place pants consecutively: the third cuff of pants k is glued to the
    # inverse of the first cuff of pants k+1 (twist along d)
    placed = [pants[0]]
    for k in range(1, g - 2):
        P1, P2, P3 = pants[k]
        prev = placed[-1]
        H = _glue(np.linalg.inv(prev[2]), prev[1], P1, P2, td[k - 1])
        Hi = np.linalg.inv(H)
        placed.append((H @ P1 @ Hi, H @ P2 @ Hi, H @ P3 @ Hi))
    # boundary holonomies to be matched by the tori commutators, in order
    targets = [(placed[0][0], placed[0][1])] + [(placed[k][1], placed[k][0]) for k in range(g - 2)]
    targets.append((placed[-1][2], placed[-1][1]))
    mats = []
    for i in range(g):
        tgt, marker = targets[i]
        A, B = tori[i]
        H = _glue(tgt, marker, comms[i], A, tc[i])
        Hi = np.linalg.inv(H)
        mats += [H @ A @ Hi, H @ B @ Hi]
    return SurfaceRep.from_matrices(g, mats)


def holonomy_lengths(rep: SurfaceRep) -> np.ndarray:
    """Translation lengths of the pants curves of ``rep``."""
    from ..hyperbolic import translation_length

    return np.array([translation_length(evaluate(rep, w)) for w in pants_curve_words(rep.genus)])


def random_coords(rng: np.random.Generator, genus: int = 2, length_range=(1.5, 3.0), twist_range=(-0.5, 0.5)) -> FNCoords:
    n = 3 * genus - 3
    return FNCoords(tuple(rng.uniform(*length_range, n)), tuple(rng.uniform(*twist_range, n)))
