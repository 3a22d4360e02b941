"""Surface groups, words, and representations into PSL(2,R).

Generators of the genus-g surface group are numbered ``1..2g`` in the order
``a1, b1, a2, b2, ...``; a letter is a signed generator index, negative for
inverses.  The relator is ``[a1,b1]...[ag,bg]`` with ``[a,b] = a b a^-1 b^-1``.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .hyperbolic import (
    BoundaryPoint,
    IsometryClass,
    MoebiusMap,
    Point,
    apply,
    busemann,
    classify,
    dist,
    fixed_points,
    to_infinity,
)

log = logging.getLogger(__name__)

DEFAULT_BALL_CAP = 3_000_000


class RepresentationError(ValueError):
    pass


class BallTooLarge(RepresentationError):
    pass


class RelatorViolation(RepresentationError):
    pass


class LiftAmbiguity(RepresentationError):
    pass


class NotFuchsian(RepresentationError):
    pass


@dataclass(frozen=True)
class SurfaceGroup:
    genus: int = 2

    def __post_init__(self):
        if int(self.genus) != self.genus or self.genus < 2:
            raise ValueError(f"genus must be an integer >= 2, got {self.genus}")

    @property
    def n_generators(self) -> int:
        return 2 * self.genus

    @property
    def euler_characteristic(self) -> int:
        return 2 - 2 * self.genus

    @property
    def relator(self) -> "Word":
        letters = []
        for i in range(self.genus):
            a, b = 2 * i + 1, 2 * i + 2
            letters += [a, b, -a, -b]
        return Word(tuple(letters))

    def letter_order(self) -> list[int]:
        """Letters in enumeration order ``a1, A1, b1, B1, a2, ...``."""
        out = []
        for k in range(1, self.n_generators + 1):
            out += [k, -k]
        return out

    def generator_name(self, letter: int) -> str:
        k = abs(letter) - 1
        name = ("a" if k % 2 == 0 else "b") + str(k // 2 + 1)
        return name if letter > 0 else name.upper()


_TOKEN = re.compile(r"([abAB])(\d+)")


@dataclass(frozen=True)
class Word:
    """A freely reduced word in the surface-group generators."""

    letters: tuple[int, ...] = ()

    def __post_init__(self):
        letters = tuple(int(x) for x in self.letters)
        object.__setattr__(self, "letters", letters)
        for x in letters:
            if x == 0:
                raise ValueError("letter 0 is not a generator")
        for x, y in zip(letters, letters[1:]):
            if x == -y:
                raise ValueError(f"word {letters} is not freely reduced")

    @classmethod
    def reduce(cls, letters: Iterable[int]) -> "Word":
        out: list[int] = []
        for x in letters:
            if out and out[-1] == -x:
                out.pop()
            else:
                out.append(int(x))
        return cls(tuple(out))

    @classmethod
    def parse(cls, text: str) -> "Word":
        """Parse ``"a1 b1 A1 B1"`` style words (capital letter = inverse).
        ``"e"`` or an empty string is the identity."""
        text = text.replace(" ", "")
        if text in ("", "e", "1"):
            return cls(())
        letters = []
        pos = 0
        for m in _TOKEN.finditer(text):
            if m.start() != pos:
                raise ValueError(f"cannot parse word {text!r}")
            ch, idx = m.group(1), int(m.group(2))
            if idx < 1:
                raise ValueError(f"generator index must be >= 1 in {text!r}")
            k = 2 * (idx - 1) + (1 if ch in "aA" else 2)
            letters.append(k if ch.islower() else -k)
            pos = m.end()
        if pos != len(text):
            raise ValueError(f"cannot parse word {text!r}")
        return cls(tuple(letters))

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        return Word.reduce(self.letters + other.letters)

    def inverse(self) -> "Word":
        return Word(tuple(-x for x in reversed(self.letters)))

    def __str__(self) -> str:
        if not self.letters:
            return "e"
        out = []
        for x in self.letters:
            k = abs(x) - 1
            name = ("a" if k % 2 == 0 else "b") + str(k // 2 + 1)
            out.append(name if x > 0 else name.upper())
        return "".join(out)


def _sign_normalize(ms: np.ndarray) -> np.ndarray:
    """Batched sign normalisation (first non-negligible entry positive)."""
    flat = ms.reshape(len(ms), 4)
    thresh = 1e-14 * np.abs(flat).max(axis=1, keepdims=True)
    big = np.abs(flat) > thresh
    first = np.argmax(big, axis=1)
    sign = np.sign(flat[np.arange(len(ms)), first])
    sign[sign == 0] = 1.0
    return ms * sign[:, None, None]


@dataclass
class SurfaceRep:
    """Representation of a surface group: one Moebius map per generator."""

    group: SurfaceGroup
    images: list[MoebiusMap]
    _mats: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.images) != self.group.n_generators:
            raise ValueError(f"expected {self.group.n_generators} generator images, got {len(self.images)}")
        self.images = [g if isinstance(g, MoebiusMap) else MoebiusMap(g) for g in self.images]
        mats = np.array([g.m for g in self.images])
        inv = np.array([[[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]] for m in mats])
        # index letter k at k + n, so row n holds the identity
        n = self.group.n_generators
        table = np.empty((2 * n + 1, 2, 2))
        table[n] = np.eye(2)
        table[n + 1 :] = mats
        table[:n] = inv[::-1]
        self._mats = table

    @classmethod
    def from_matrices(cls, genus: int, mats: Sequence) -> "SurfaceRep":
        return cls(SurfaceGroup(genus), [MoebiusMap(np.asarray(m, dtype=float)) for m in mats])

    @classmethod
    def trivial(cls, genus: int = 2) -> "SurfaceRep":
        return cls(SurfaceGroup(genus), [MoebiusMap.identity() for _ in range(2 * genus)])

    @property
    def genus(self) -> int:
        return self.group.genus

    def letter_matrix(self, letter: int) -> np.ndarray:
        return self._mats[letter + self.group.n_generators]

    def matrix(self, word: Word | Sequence[int]) -> np.ndarray:
        """SL(2,R) product of the letters (not sign normalised)."""
        letters = word.letters if isinstance(word, Word) else word
        m = np.eye(2)
        for x in letters:
            m = m @ self.letter_matrix(x)
        return m

    def conjugate(self, h: MoebiusMap) -> "SurfaceRep":
        return SurfaceRep(self.group, [h @ g @ h.inverse() for g in self.images])


def evaluate(rep: SurfaceRep, w: Word) -> MoebiusMap:
    """Ordered product of the generator images along ``w``."""
    if not isinstance(w, Word):
        w = Word(tuple(w))
    return MoebiusMap(rep.matrix(w))


def relator_residual(rep: SurfaceRep) -> float:
    m = rep.matrix(rep.group.relator)
    return float(min(np.linalg.norm(m - np.eye(2)), np.linalg.norm(m + np.eye(2))))


# ---------------------------------------------------------------------------
# word balls


def ball_size(group: SurfaceGroup, radius: int) -> int:
    n = 2 * group.n_generators
    return sum(n * (n - 1) ** (k - 1) for k in range(1, radius + 1))


def ball_letters(group: SurfaceGroup, radius: int, cap: int = DEFAULT_BALL_CAP) -> list[np.ndarray]:
    """Freely reduced words of each length ``1..radius`` as integer arrays,
    each level in lexicographic order of :meth:`SurfaceGroup.letter_order`."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if ball_size(group, radius) > cap:
        raise BallTooLarge(f"ball of radius {radius} has {ball_size(group, radius)} words (cap {cap})")
    order = np.array(group.letter_order())
    levels = [order[:, None].copy()]
    for _ in range(1, radius):
        prev = levels[-1]
        last = prev[:, -1]
        # every child of each parent in letter order, minus the cancelling one
        parents = np.repeat(np.arange(len(prev)), len(order))
        letters = np.tile(order, len(prev))
        keep = letters != -last[parents]
        levels.append(np.concatenate([prev[parents[keep]], letters[keep, None]], axis=1))
    return levels


def enumerate_ball(group: SurfaceGroup, radius: int, cap: int = DEFAULT_BALL_CAP, allow_empty: bool = False) -> list[Word]:
    """All freely reduced non-empty words of length ``<= radius``, ordered by
    length then lexicographically."""
    if radius < 1:
        if allow_empty:
            return []
        raise ValueError("radius must be >= 1")
    return [Word(tuple(row)) for lev in ball_letters(group, radius, cap) for row in lev]


def ball_matrices(rep: SurfaceRep, radius: int, cap: int = DEFAULT_BALL_CAP) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Letters and SL(2,R) matrices of every word in the ball, per level."""
    levels = ball_letters(rep.group, radius, cap)
    n = rep.group.n_generators
    mats = [rep._mats[levels[0][:, 0] + n]]
    for k in range(1, len(levels)):
        prev_letters = levels[k - 1]
        lev = levels[k]
        # locate each word's parent (prefix) by a lexicographic lookup
        parent_idx = _parent_index(prev_letters, lev[:, :-1])
        mats.append(np.einsum("nij,njk->nik", mats[k - 1][parent_idx], rep._mats[lev[:, -1] + n]))
    return levels, mats


def _parent_index(parents: np.ndarray, prefixes: np.ndarray) -> np.ndarray:
    base = int(max(np.abs(parents).max(), np.abs(prefixes).max())) * 2 + 1
    def key(a):
        k = np.zeros(len(a), dtype=np.int64)
        for col in range(a.shape[1]):
            k = k * base + (a[:, col] + base // 2)
        return k
    pk = key(parents)
    order = np.argsort(pk)
    pos = np.searchsorted(pk[order], key(prefixes))
    return order[pos]


def lengths_from_traces(tr: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    t = np.abs(tr)
    out = np.zeros_like(t)
    hyp = t > 2.0 + tol
    out[hyp] = 2.0 * np.arccosh(t[hyp] / 2.0)
    return out


def spectrum_arrays(rep: SurfaceRep, radius: int, cap: int = DEFAULT_BALL_CAP) -> tuple[list[np.ndarray], np.ndarray]:
    """Word letters per level and the concatenated translation lengths."""
    levels, mats = ball_matrices(rep, radius, cap)
    tr = np.concatenate([m[:, 0, 0] + m[:, 1, 1] for m in mats])
    return levels, lengths_from_traces(tr)


def length_spectrum(rep: SurfaceRep, radius: int, cap: int = DEFAULT_BALL_CAP) -> dict[Word, float]:
    levels, lengths = spectrum_arrays(rep, radius, cap)
    words = [Word(tuple(row)) for lev in levels for row in lev]
    return dict(zip(words, lengths.tolist()))


# ---------------------------------------------------------------------------
# Euler class through lifts to the universal cover


def _iwasawa_angle(m: np.ndarray) -> float:
    return math.atan2(m[1, 0], m[0, 0])


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _lift_mul(l1: tuple[float, np.ndarray], l2: tuple[float, np.ndarray]) -> tuple[float, np.ndarray]:
    # M1 M2 = K(t1) P1 K(t2) P2; the K-angle of P1 K(t2) is t2 plus the signed
    # angle by which the upper-triangular P1 turns the unit vector at angle t2
    t1, m1 = l1
    t2, m2 = l2
    p1 = _rot(-t1) @ m1
    v = np.array([math.cos(t2), math.sin(t2)])
    pv = p1 @ v
    delta = math.atan2(v[0] * pv[1] - v[1] * pv[0], v @ pv)
    return t1 + t2 + delta, m1 @ m2


def _canonical_lift(m: np.ndarray) -> tuple[float, np.ndarray]:
    return _iwasawa_angle(m), m


def euler_class(rep: SurfaceRep, tol: float = 1e-6) -> int:
    """Euler class, normalised so that Fenchel-Nielsen holonomies give ``2g-2``.

    Each generator image is lifted to the universal cover of PSL(2,R) (its
    Iwasawa angle), the relator is multiplied out in the cover, and the
    resulting lift of the identity is a rotation by ``k pi``.
    """
    res = relator_residual(rep)
    if res > tol:
        raise RelatorViolation(f"relator residual {res:.3g} exceeds {tol:.3g}")
    lifts = {}
    for k in range(1, rep.group.n_generators + 1):
        m = rep.letter_matrix(k)
        lf = _canonical_lift(m)
        minv = rep.letter_matrix(-k)
        li = _canonical_lift(minv)
        t, _ = _lift_mul(lf, li)
        # shift the inverse lift so that lift * inverse-lift is the identity lift
        li = (li[0] - 2 * math.pi * round(t / (2 * math.pi)), minv)
        lifts[k], lifts[-k] = lf, li
    total = (0.0, np.eye(2))
    for x in rep.group.relator.letters:
        total = _lift_mul(total, lifts[x])
    k = total[0] / math.pi
    if abs(k - round(k)) > 0.1:
        raise LiftAmbiguity(f"relator lift is not close to a rotation by a multiple of pi (k={k:.4f})")
    return -int(round(k))


def apply_sigma(rep: SurfaceRep) -> SurfaceRep:
    """Conjugate every image by ``diag(1,-1)`` (the outer automorphism)."""
    out = []
    for g in rep.images:
        a, b, c, d = g.m.ravel()
        out.append(MoebiusMap(np.array([[a, -b], [-c, d]])))
    return SurfaceRep(rep.group, out)


def elliptic_rep(genus: int, angles: Sequence[float], center: Point | None = None) -> SurfaceRep:
    """Rotations by ``angles`` about a common point (``i`` by default)."""
    if len(angles) != 2 * genus:
        raise ValueError(f"need {2 * genus} angles")
    return SurfaceRep(SurfaceGroup(genus), [MoebiusMap.rotation(float(t), center) for t in angles])


def axis_rep(genus: int, translations: Sequence[float]) -> SurfaceRep:
    """Translations along the imaginary axis; ``w -> exp(t) w`` for each generator."""
    if len(translations) != 2 * genus:
        raise ValueError(f"need {2 * genus} translation lengths")
    return SurfaceRep(SurfaceGroup(genus), [MoebiusMap.translation_along_imaginary_axis(float(t)) for t in translations])


def is_fuchsian(rep: SurfaceRep) -> bool:
    try:
        return abs(euler_class(rep)) == 2 * rep.genus - 2
    except RepresentationError:
        return False


# ---------------------------------------------------------------------------
# representations with a common fixed point


@dataclass(frozen=True)
class ParabolicData:
    """Common fixed point of a reducible representation.

    ``kind`` is ``"interior"`` (bounded orbits, ``morphism`` identically zero)
    or ``"boundary"``.  ``fixed_point`` is the fixed point and ``morphism``
    holds ``m(gen) = B_{p,i}(rho(gen) i)`` for each generator.  When the
    representation also fixes a second boundary point (a common axis),
    ``partner`` holds it.
    """

    fixed_point: Point | BoundaryPoint
    morphism: np.ndarray
    kind: str = "boundary"
    partner: BoundaryPoint | None = None

    def evaluate(self, w: Word | Sequence[int]) -> float:
        letters = w.letters if isinstance(w, Word) else w
        return float(sum(self.morphism[abs(x) - 1] * (1 if x > 0 else -1) for x in letters))

    @property
    def is_boundary(self) -> bool:
        return self.kind == "boundary"


def _fixes_boundary(g: MoebiusMap, p: BoundaryPoint, tol: float) -> bool:
    h = to_infinity(p)
    m = (h @ g @ h.inverse()).m
    return abs(m[1, 0]) <= tol * max(1.0, np.abs(m).max())


def detect_parabolic(rep: SurfaceRep, radius: int = 3, tol: float = 1e-6) -> ParabolicData | None:
    """Find a common fixed point of all generator images on the closed plane."""
    gens = [g for g in rep.images if classify(g, tol) is not IsometryClass.IDENTITY]
    x0 = Point(0.0, 1.0)
    n = rep.group.n_generators
    if not gens:
        return ParabolicData(x0, np.zeros(n), kind="interior")
    # candidates: fixed points of the first non-trivial image, intersected
    # with those of an image that does not commute with it (if any)
    cands = fixed_points(gens[0])
    fixed = []
    for p in cands:
        if isinstance(p, Point):
            ok = all(dist(p, apply(g, p)) <= tol for g in gens)
        else:
            ok = all(_fixes_boundary(g, p, tol) for g in gens)
        if ok:
            fixed.append(p)
    if not fixed:
        return None
    if isinstance(fixed[0], Point):
        return ParabolicData(fixed[0], np.zeros(n), kind="interior")
    p = fixed[0]
    partner = fixed[1] if len(fixed) > 1 else None
    morph = np.array([busemann(p, x0, apply(g, x0)) for g in rep.images])
    data = ParabolicData(p, morph, kind="boundary", partner=partner)
    if not _verify_additive(rep, data, radius, tol):
        log.warning("common fixed point found but |m| does not match the length spectrum")
        return None
    return data


def _verify_additive(rep: SurfaceRep, data: ParabolicData, radius: int, tol: float) -> bool:
    return spectrum_residual(rep, data, radius) <= max(tol, 1e-6)


def spectrum_residual(rep: SurfaceRep, data: ParabolicData, radius: int) -> float:
    """``max | |m(w)| - l(rho(w)) |`` over the ball."""
    levels, lengths = spectrum_arrays(rep, radius)
    letters = np.concatenate([np.pad(l, ((0, 0), (0, radius - l.shape[1]))) for l in levels])
    m_ext = np.concatenate([[0.0], data.morphism])
    vals = np.sign(letters) * m_ext[np.abs(letters)]
    return float(np.abs(np.abs(vals.sum(axis=1)) - lengths).max())
