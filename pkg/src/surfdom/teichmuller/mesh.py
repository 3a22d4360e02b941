"""Triangulated fundamental domains.

Vertices are stored as upper half-plane points; faces are geodesic triangles
(straight in Klein coordinates).  Every boundary edge of the domain is paired
with its image under a side pairing, and every vertex has a *master*: the
vertex of its orbit with the lowest index, together with a word ``w`` such
that ``vertex = j(w) . master``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from ..hyperbolic import (
    klein_to_hyperboloid,
    klein_to_poincare,
    klein_to_uhp,
    minkowski,
    so21_matrices,
    uhp_to_klein,
)
from ..surface import SurfaceRep, Word, euler_class
from .dirichlet import DirichletDomain, DomainConstructionFailed, dirichlet_domain

log = logging.getLogger(__name__)

MIN_EDGE, MAX_EDGE = 0.02, 0.5


class IndexMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EdgePairing:
    """Boundary edge ``(a, b)`` is carried onto ``(a2, b2)`` by ``j(word)``."""

    a: int
    b: int
    a2: int
    b2: int
    word: Word


@dataclass
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray
    pairings: list[EdgePairing]
    conformal_factor: np.ndarray
    genus: int
    master: np.ndarray = field(default=None, repr=False)
    vertex_words: list[Word] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.conformal_factor = np.asarray(self.conformal_factor, dtype=float)
        if len(self.conformal_factor) != len(self.faces):
            raise IndexMismatch("one conformal factor per face is required")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise IndexMismatch("face refers to a missing vertex")
        if self.master is None or self.vertex_words is None:
            self.master, self.vertex_words = vertex_classes(len(self.vertices), self.pairings)
        self._klein = uhp_to_klein(self.vertices[:, 0], self.vertices[:, 1])

    @property
    def klein(self) -> np.ndarray:
        return self._klein

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def masters(self) -> np.ndarray:
        return np.flatnonzero(self.master == np.arange(self.n_vertices))

    def face_areas(self) -> np.ndarray:
        """Exact hyperbolic areas of the geodesic faces (angle defect)."""
        return geodesic_triangle_areas(self.klein[self.faces])

    def centroids(self) -> np.ndarray:
        """Face barycentres in Klein coordinates (mean of the corners)."""
        return self.klein[self.faces].mean(axis=1)

    def edge_lengths(self) -> np.ndarray:
        e = unique_edges(self.faces)
        X = klein_to_hyperboloid(self.klein)
        return np.arccosh(np.maximum(minkowski(X[e[:, 0]], X[e[:, 1]]), 1.0))

    def boundary_edges(self) -> np.ndarray:
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        u, c = np.unique(e, axis=0, return_counts=True)
        return u[c == 1]


def unique_edges(faces: np.ndarray) -> np.ndarray:
    e = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    return np.unique(e, axis=0)


def geodesic_triangle_areas(tri_klein: np.ndarray) -> np.ndarray:
    X = klein_to_hyperboloid(tri_klein)
    out = np.zeros(len(tri_klein))
    for i in range(3):
        a, b, c = X[:, i], X[:, (i + 1) % 3], X[:, (i + 2) % 3]
        # tangent directions at a towards b and c
        ub = b - minkowski(a, b)[:, None] * a
        uc = c - minkowski(a, c)[:, None] * a
        cosang = -minkowski(ub, uc) / np.sqrt(minkowski(ub, ub) * minkowski(uc, uc))
        out += np.arccos(np.clip(cosang, -1.0, 1.0))
    return np.pi - out


def vertex_classes(n: int, pairings: list[EdgePairing]) -> tuple[np.ndarray, list[Word]]:
    """Master vertex and word of every vertex from the edge pairings."""
    adj: dict[int, list[tuple[int, Word]]] = {}
    for p in pairings:
        for u, v in ((p.a, p.a2), (p.b, p.b2)):
            adj.setdefault(u, []).append((v, p.word))
            adj.setdefault(v, []).append((u, p.word.inverse()))
    master = np.arange(n)
    words: list[Word] = [Word(())] * n
    seen = np.zeros(n, dtype=bool)
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        queue = [root]
        while queue:
            u = queue.pop(0)
            for v, w in adj.get(u, []):
                if not seen[v]:
                    seen[v] = True
                    master[v] = root
                    words[v] = w * words[u]
                    queue.append(v)
    return master, words


# ---------------------------------------------------------------------------
# construction


def _geodesic_points(p: np.ndarray, q: np.ndarray, n: int) -> np.ndarray:
    """``n + 1`` equally spaced points on the geodesic from ``p`` to ``q`` (Klein)."""
    P, Q = klein_to_hyperboloid(p), klein_to_hyperboloid(q)
    L = math.acosh(max(float(minkowski(P, Q)), 1.0))
    t = np.linspace(0.0, 1.0, n + 1)
    X = (np.sinh((1 - t) * L)[:, None] * P + np.sinh(t * L)[:, None] * Q) / math.sinh(L)
    return X[:, 1:] / X[:, :1]


def _side_length(p, q) -> float:
    return math.acosh(max(float(minkowski(klein_to_hyperboloid(p), klein_to_hyperboloid(q))), 1.0))


def _interior_points(dom: DirichletDomain, h: float, clearance: float) -> np.ndarray:
    corners = dom.corners
    R = float(np.max(np.arccosh(1.0 / np.sqrt(1.0 - np.sum(corners * corners, axis=1)))))
    pts = [np.zeros((1, 2))]
    dr = h * math.sqrt(3.0) / 2.0
    k = 1
    golden = math.pi * (3.0 - math.sqrt(5.0))
    while k * dr <= R + dr:
        r = k * dr
        m = max(6, int(round(2 * math.pi * math.sinh(r) / h)))
        th = golden * k + 2 * math.pi * np.arange(m) / m
        pts.append(math.tanh(r) * np.stack([np.cos(th), np.sin(th)], axis=1))
        k += 1
    pts = np.concatenate(pts)
    pts = pts[dom.contains(pts)]
    # distance to each side's geodesic
    X = klein_to_hyperboloid(pts)
    so = so21_matrices(dom.matrices)
    keep = np.ones(len(pts), dtype=bool)
    for i in range(dom.n_sides):
        Y = so[i][:, 0] - np.array([1.0, 0.0, 0.0])
        s = np.abs(minkowski(X, Y)) / math.sqrt(-float(minkowski(Y, Y)))
        keep &= np.arcsinh(s) >= clearance
    return pts[keep]


def _domain_mesh(dom: DirichletDomain, h: float, max_edge: float, hb: float):
    n = dom.n_sides
    corners = dom.corners
    so = so21_matrices(dom.matrices)
    side_pts: dict[int, list[int]] = {}
    pts: list[np.ndarray] = [c for c in corners]
    pairings = []
    done = set()
    for i in range(n):
        j = int(dom.partner[i])
        if (j, i) in done or (i, j) in done:
            continue
        done.add((i, j))
        p, q = dom.side(j)
        m = max(1, math.ceil(_side_length(p, q) / hb - 1e-9))
        src = _geodesic_points(p, q, m)
        src_idx = [j] + [len(pts) + k for k in range(m - 1)] + [(j + 1) % n]
        pts.extend(src[1:-1])
        img_h = (so[i] @ np.concatenate([np.ones((m + 1, 1)), src], axis=1).T).T
        img = img_h[:, 1:] / img_h[:, :1]
        # the side pairing reverses orientation along the boundary
        c0, c1 = dom.side(i)
        if np.linalg.norm(img[0] - c1) > 1e-7 or np.linalg.norm(img[-1] - c0) > 1e-7:
            raise DomainConstructionFailed("side pairing does not reverse the boundary orientation")
        dst_idx = [(i + 1) % n] + [len(pts) + k for k in range(m - 1)] + [i]
        pts.extend(img[1:-1])
        side_pts[j] = src_idx
        side_pts[i] = dst_idx[::-1]
        word = dom.words[i]
        for k in range(m):
            pairings.append(EdgePairing(src_idx[k], src_idx[k + 1], dst_idx[k], dst_idx[k + 1], word))
    boundary = np.array(pts)
    nb = len(boundary)
    interior = _interior_points(dom, h, clearance=0.55 * h)
    allpts = np.concatenate([boundary, interior])
    on_side = [set(side_pts[s]) for s in range(n)]
    for _ in range(8):
        faces, remap = _triangulate(allpts, dom, on_side, side_pts, nb, h)
        if remap is not None:
            allpts = allpts[remap >= 0]
            faces = remap[faces]
            pairings = [EdgePairing(int(remap[p.a]), int(remap[p.b]), int(remap[p.a2]), int(remap[p.b2]), p.word) for p in pairings]
            side_pts = {s: [int(remap[v]) for v in seq] for s, seq in side_pts.items()}
            on_side = [set(side_pts[s]) for s in range(n)]
        # split edges longer than the bound at their midpoints
        e = unique_edges(faces)
        X = klein_to_hyperboloid(allpts)
        lens = np.arccosh(np.maximum(minkowski(X[e[:, 0]], X[e[:, 1]]), 1.0))
        long = lens > max_edge
        if not np.any(long):
            return allpts, faces, pairings
        mid = X[e[long, 0]] + X[e[long, 1]]
        allpts = np.concatenate([allpts, mid[:, 1:] / mid[:, :1]])
    raise DomainConstructionFailed("could not meet the edge-length bound")


def _mirror_points(pts: np.ndarray, dom: DirichletDomain, reach: float) -> tuple[np.ndarray, np.ndarray]:
    """Reflections of the points within ``reach`` of a side across that side,
    keeping only images that fall outside the domain.

    Returns the images and the index of the point each one reflects.
    """
    X = klein_to_hyperboloid(pts)
    so = so21_matrices(dom.matrices)
    out, src = [], []
    for i in range(dom.n_sides):
        N = so[i][:, 0] - np.array([1.0, 0.0, 0.0])
        nn = float(minkowski(N, N))
        s = minkowski(X, N)
        near = np.arcsinh(np.abs(s) / math.sqrt(-nn)) < reach
        near &= np.abs(s) > 1e-12
        R = X[near] - 2.0 * (s[near] / nn)[:, None] * N
        k = R[:, 1:] / R[:, :1]
        outside = ~dom.contains(k, tol=1e-9)
        out.append(k[outside])
        src.append(np.flatnonzero(near)[outside])
    if not out:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    return np.concatenate(out), np.concatenate(src)


def _triangulate(pts, dom, on_side, side_pts, nb, h):
    """Delaunay triangulation of the domain points.

    The Euclidean Delaunay triangulation in the Poincare disk is the hyperbolic
    one.  Points mirrored across each side make the side segments Delaunay
    edges and keep flat triangles along the sides out.
    """
    interior_mask = np.ones(len(pts), dtype=bool)
    for _ in range(5):
        idx = np.flatnonzero(interior_mask)
        ghosts, ghost_src = _mirror_points(pts[idx], dom, reach=3.0 * h)
        allp = np.concatenate([pts[idx], ghosts])
        tri = Delaunay(klein_to_poincare(allp))
        simp = tri.simplices[(tri.simplices < len(idx)).all(axis=1)]
        faces = idx[simp]
        bad = np.zeros(len(faces), dtype=bool)
        for s in on_side:
            bad |= np.isin(faces, list(s)).all(axis=1)
        faces = faces[~bad]
        # required boundary segments
        have = {tuple(sorted(e)) for e in unique_edges(faces).tolist()}
        missing = []
        for s, seq in side_pts.items():
            for a, b in zip(seq, seq[1:]):
                if (min(a, b), max(a, b)) not in have:
                    missing.append((a, b))
        if not missing:
            break
        # drop interior points close to a missing segment, or whose mirror
        # image is
        P = klein_to_poincare(pts)
        G = klein_to_poincare(ghosts)
        for a, b in missing:
            c = 0.5 * (P[a] + P[b])
            r = 0.5 * np.linalg.norm(P[a] - P[b])
            near = np.linalg.norm(P - c, axis=1) < 1.05 * r
            near[idx[ghost_src[np.linalg.norm(G - c, axis=1) < 1.05 * r]]] = True
            near[:nb] = False
            interior_mask &= ~near
    else:
        raise DomainConstructionFailed("could not recover the domain boundary in the triangulation")
    # counter-clockwise orientation in Klein coordinates
    k = pts[faces]
    cross = (k[:, 1, 0] - k[:, 0, 0]) * (k[:, 2, 1] - k[:, 0, 1]) - (k[:, 1, 1] - k[:, 0, 1]) * (k[:, 2, 0] - k[:, 0, 0])
    faces[cross < 0] = faces[cross < 0][:, [0, 2, 1]]
    used = np.unique(faces)
    if len(used) != len(pts):
        # renumber, dropping unused interior points
        remap = -np.ones(len(pts), dtype=np.int64)
        remap[used] = np.arange(len(used))
        if np.any(remap[:nb] < 0):
            raise DomainConstructionFailed("a boundary point is not used by the triangulation")
        return faces, remap
    return faces, None


def conformal_factors(klein_pts: np.ndarray) -> np.ndarray:
    """Density ``alpha`` of the metric ``alpha |dw|^2`` in the Poincare chart."""
    w = klein_to_poincare(klein_pts)
    return 4.0 / (1.0 - np.sum(w * w, axis=-1)) ** 2


def build_mesh(j: SurfaceRep, target_edge: float, check_fuchsian: bool = True) -> Mesh:
    """Triangulate the Dirichlet domain of ``j`` about ``i``."""
    if not (MIN_EDGE <= target_edge <= MAX_EDGE):
        raise ValueError(f"target_edge must lie in [{MIN_EDGE}, {MAX_EDGE}], got {target_edge}")
    if check_fuchsian:
        e = euler_class(j)
        if abs(e) != 2 * j.genus - 2:
            from ..surface import NotFuchsian

            raise NotFuchsian(f"euler class {e} is not extremal")
    dom = dirichlet_domain(j)
    pts, faces, pairings = _domain_mesh(dom, 0.8 * target_edge, target_edge, 0.6 * target_edge)
    x, y = klein_to_uhp(pts)
    verts = np.stack([x, y], axis=1)
    mesh = Mesh(verts, faces, pairings, np.ones(len(faces)), j.genus)
    mesh.conformal_factor = conformal_factors(mesh.centroids())
    return mesh


def check_mesh(mesh: Mesh, j: SurfaceRep | None = None, tol: float = 1e-6) -> dict:
    """Structural and metric checks; returns a dict of diagnostics."""
    out = {}
    areas = mesh.face_areas()
    target = 4 * math.pi * (mesh.genus - 1)
    out["area"] = float(areas.sum())
    out["area_error"] = abs(out["area"] - target) / target
    out["min_face_area"] = float(areas.min())
    X = klein_to_hyperboloid(mesh.klein)

    def length(a, b):
        return math.acosh(max(float(minkowski(X[a], X[b])), 1.0))

    mism = [abs(length(p.a, p.b) - length(p.a2, p.b2)) for p in mesh.pairings]
    out["pairing_length_mismatch"] = float(max(mism)) if mism else 0.0
    bnd = {tuple(e) for e in mesh.boundary_edges().tolist()}
    paired = []
    for p in mesh.pairings:
        paired += [tuple(sorted((p.a, p.b))), tuple(sorted((p.a2, p.b2)))]
    out["boundary_edges"] = len(bnd)
    out["unpaired_boundary_edges"] = len(bnd - set(paired))
    out["multiply_paired_edges"] = len(paired) - len(set(paired))
    out["max_edge"] = float(mesh.edge_lengths().max())
    if j is not None:
        err = 0.0
        for v in range(mesh.n_vertices):
            m = mesh.master[v]
            if m == v:
                continue
            M = so21_matrices(j.matrix(mesh.vertex_words[v])[None])[0]
            Y = M @ X[m]
            err = max(err, float(np.linalg.norm(Y[1:] / Y[0] - mesh.klein[v])))
        out["vertex_word_error"] = err
    out["ok"] = (
        out["pairing_length_mismatch"] < tol
        and out["unpaired_boundary_edges"] == 0
        and out["multiply_paired_edges"] == 0
        and out["min_face_area"] > 0
        and out.get("vertex_word_error", 0.0) < tol
    )
    return out
