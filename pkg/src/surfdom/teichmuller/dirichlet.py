"""Dirichlet fundamental domain of a Fuchsian surface group about ``i``.

The domain is the intersection of the half-planes ``d(x, i) <= d(x, g i)``;
in Klein coordinates these are Euclidean half-planes, so the polygon is
obtained by clipping a square.  Group elements are generated breadth first
from the standard generators and, once a bounded polygon exists, from its
side pairings, keeping only elements that can still contribute a side.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from scipy.optimize import minimize

from ..hyperbolic import MoebiusMap, Point, klein_metric, klein_to_hyperboloid, minkowski, so21_matrices, uhp_to_hyperboloid
from ..surface import SurfaceRep, Word, _sign_normalize

log = logging.getLogger(__name__)

MAX_ROUNDS = 12
# orbit-distance cap before the polygon is bounded
PRE_BOUND_LIMIT = 12.0
MAX_ELEMENTS = 300_000
# sides shorter than this come from bisectors meeting in one point
MIN_SIDE = 1e-6


class DomainConstructionFailed(RuntimeError):
    pass


@dataclass
class DirichletDomain:
    """Convex polygon in Klein coordinates with its side pairings.

    Side ``i`` runs from ``corners[i]`` to ``corners[i+1]`` and lies on the
    bisector of ``i`` and ``g_i i``; ``partner[i]`` is the side of ``g_i^-1``
    and ``words[i]`` represents ``g_i``, which maps the partner side onto side ``i``.
    """

    corners: np.ndarray
    matrices: np.ndarray
    words: list[Word]
    partner: np.ndarray
    genus: int

    @property
    def n_sides(self) -> int:
        return len(self.corners)

    def side(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.corners[i], self.corners[(i + 1) % self.n_sides]

    def interior_angles(self) -> np.ndarray:
        n = self.n_sides
        out = np.empty(n)
        for i in range(n):
            v = self.corners[i]
            u1 = self.corners[(i + 1) % n] - v
            u2 = self.corners[(i - 1) % n] - v
            G = klein_metric(v)
            c = u1 @ G @ u2 / math.sqrt((u1 @ G @ u1) * (u2 @ G @ u2))
            out[i] = math.acos(max(-1.0, min(1.0, c)))
        return out

    def area(self) -> float:
        return (self.n_sides - 2) * math.pi - float(self.interior_angles().sum())

    def contains(self, k: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Whether Klein points lie in the polygon (``tol`` widens it)."""
        k = np.atleast_2d(k)
        inside = np.ones(len(k), dtype=bool)
        for i in range(self.n_sides):
            a, b = self.side(i)
            e = b - a
            cross = e[0] * (k[:, 1] - a[1]) - e[1] * (k[:, 0] - a[0])
            inside &= cross >= -tol * np.linalg.norm(e)
        return inside


def balanced_base_point(rep: SurfaceRep) -> Point:
    """Point minimising ``sum cosh d(x, g x)`` over the generator images."""
    mats = np.array([g.m for g in rep.images])

    def cost(v):
        x, y = v[0], math.exp(v[1])
        X = uhp_to_hyperboloid(x, y)
        return float(np.sum(minkowski(X, (so21_matrices(mats) @ X))))

    res = minimize(cost, np.zeros(2), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    return Point(float(res.x[0]), math.exp(float(res.x[1])))


def centering_isometry(p: Point) -> MoebiusMap:
    """Isometry sending ``p`` to ``i``."""
    sy = math.sqrt(p.y)
    return MoebiusMap(np.array([[1 / sy, -p.x / sy], [0.0, sy]]))


def _orbit_points(mats: np.ndarray) -> np.ndarray:
    return so21_matrices(mats)[:, :, 0]


def _key(m: np.ndarray) -> tuple:
    return tuple(np.round(m.ravel() * 1e6).astype(np.int64))


def _clip(poly: np.ndarray, labels: list[int], n: np.ndarray, c: float, label: int):
    """Clip a convex polygon (CCW) by ``n . k <= c``."""
    s = poly @ n - c
    if np.all(s <= 1e-15):
        return poly, labels, False
    if np.all(s >= 0):
        return poly[:0], [], True
    out, out_labels = [], []
    m = len(poly)
    for i in range(m):
        j = (i + 1) % m
        p, q = poly[i], poly[j]
        sp, sq = s[i], s[j]
        if sp <= 0:
            out.append(p)
            out_labels.append(labels[i])
            if sq > 0:
                t = sp / (sp - sq)
                out.append(p + t * (q - p))
                out_labels.append(label)
        elif sq <= 0:
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
            out_labels.append(labels[i])
    return np.array(out), out_labels, True


def _polygon(points: np.ndarray, order: np.ndarray):
    poly = np.array([[-1.5, -1.5], [1.5, -1.5], [1.5, 1.5], [-1.5, 1.5]])
    labels = [-1, -1, -1, -1]
    for idx in order:
        X = points[idx]
        Y = X - np.array([1.0, 0.0, 0.0])
        nrm = math.hypot(Y[1], Y[2])
        if Y[0] < 1e-9:
            # numerically the identity
            continue
        poly, labels, _ = _clip(poly, labels, Y[1:] / nrm, Y[0] / nrm, int(idx))
        if len(poly) == 0:
            raise DomainConstructionFailed("polygon clipped to nothing")
    # several bisectors through one point leave sides of negligible length;
    # drop them so that every corner is a genuine vertex
    while len(poly) > 3:
        nxt = np.roll(poly, -1, axis=0)
        ok = np.all(np.sum(poly * poly, axis=1) < 1.0) and np.all(np.sum(nxt * nxt, axis=1) < 1.0)
        if not ok:
            break
        X, Y = klein_to_hyperboloid(poly), klein_to_hyperboloid(nxt)
        lens = np.arccosh(np.maximum(minkowski(X, Y), 1.0))
        i = int(np.argmin(lens))
        if lens[i] > MIN_SIDE:
            break
        log.debug("dropping side of length %.3g", lens[i])
        poly = np.delete(poly, i, axis=0)
        labels = labels[:i] + labels[i + 1 :]
    return poly, labels


def _inverse(m: np.ndarray) -> np.ndarray:
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def dirichlet_domain(rep: SurfaceRep, max_rounds: int = MAX_ROUNDS, area_tol: float = 1e-6) -> DirichletDomain:
    """Dirichlet domain of ``rep`` about ``i``."""
    genus = rep.genus
    target_area = 4 * math.pi * (genus - 1)
    gens: list[tuple[np.ndarray, tuple[int, ...]]] = []
    for k in rep.group.letter_order():
        gens.append((rep.letter_matrix(k), (k,)))
    elems: dict[tuple, int] = {}
    mats: list[np.ndarray] = []
    words: list[tuple[int, ...]] = []

    def add(m, w):
        m = _sign_normalize(m[None])[0]
        key = _key(m)
        if key in elems:
            return None
        elems[key] = len(mats)
        mats.append(m)
        words.append(w)
        return len(mats) - 1

    add(np.eye(2), ())
    frontier = [0]
    limit = PRE_BOUND_LIMIT
    last_err = "no rounds run"
    for rnd in range(1, max_rounds + 1):
        new = []
        for i in frontier:
            for gm, gw in gens:
                m = mats[i] @ gm
                if np.sum(m * m) / 2 > math.cosh(limit):
                    continue
                w = Word.reduce(words[i] + gw)
                idx = add(m, w.letters)
                if idx is not None:
                    new.append(idx)
                    # the inverse has the same displacement and pairs with it
                    inv = add(_inverse(m), w.inverse().letters)
                    if inv is not None:
                        new.append(inv)
        frontier = new
        if len(mats) > MAX_ELEMENTS:
            raise DomainConstructionFailed(f"more than {MAX_ELEMENTS} group elements needed ({last_err})")
        M = np.array(mats)
        pts = _orbit_points(M)
        d = np.arccosh(np.maximum(pts[:, 0], 1.0))
        order = np.argsort(d, kind="stable")[1:]
        poly, labels = _polygon(pts, order)
        r2 = np.sum(poly * poly, axis=1)
        if np.any(r2 >= 1.0 - 1e-14) or -1 in labels:
            last_err = f"round {rnd}: polygon not yet bounded"
            continue
        R = float(np.max(np.arccosh(1.0 / np.sqrt(1.0 - r2))))
        limit = min(limit, 2.0 * R + 1.5)
        dom = _assemble(poly, labels, M, words, genus)
        if dom is None:
            last_err = f"round {rnd}: side pairings incomplete"
        else:
            err = abs(dom.area() - target_area)
            if err < area_tol:
                log.debug("Dirichlet domain closed in round %d with %d sides", rnd, dom.n_sides)
                return dom
            last_err = f"round {rnd}: area {dom.area():.8f} vs {target_area:.8f}"
        # side pairings become extra generators
        have = {_key(g[0]) for g in gens}
        for lab in set(labels):
            if _key(M[lab]) not in have:
                gens.append((M[lab], words[lab]))
        if not frontier:
            frontier = list(range(len(mats)))
    raise DomainConstructionFailed(f"Dirichlet domain did not close within {max_rounds} rounds ({last_err})")


def _assemble(poly, labels, M, words, genus) -> DirichletDomain | None:
    n = len(poly)
    keys = {_key(_sign_normalize(M[lab][None])[0]): i for i, lab in enumerate(labels)}
    partner = np.empty(n, dtype=int)
    for i, lab in enumerate(labels):
        inv = _sign_normalize(_inverse(M[lab])[None])[0]
        j = keys.get(_key(inv))
        if j is None:
            return None
        partner[i] = j
    mats = np.array([M[lab] for lab in labels])
    dom = DirichletDomain(poly, mats, [Word(words[lab]) for lab in labels], partner, genus)
    # g_i must carry the partner side onto side i
    so = so21_matrices(mats)
    for i in range(n):
        a, b = dom.side(partner[i])
        img = []
        for p in (a, b):
            X = so[i] @ np.array([1.0, p[0], p[1]])
            img.append(X[1:] / X[0])
        c0, c1 = dom.side(i)
        if not (min(np.linalg.norm(img[0] - c1) + np.linalg.norm(img[1] - c0),
                    np.linalg.norm(img[0] - c0) + np.linalg.norm(img[1] - c1)) < 1e-7):
            return None
    return dom


def vertex_cycles(dom: DirichletDomain) -> list[list[int]]:
    """Corner indices grouped into orbits under the side pairings."""
    n = dom.n_sides
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    so = so21_matrices(dom.matrices)
    for i in range(n):
        j = dom.partner[i]
        for c in (j, (j + 1) % n):
            X = so[i] @ np.array([1.0, *dom.corners[c]])
            img = X[1:] / X[0]
            t = int(np.argmin(np.linalg.norm(dom.corners - img, axis=1)))
            parent[find(c)] = find(t)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())
