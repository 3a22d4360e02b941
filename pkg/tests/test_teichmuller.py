import math

import numpy as np
import pytest

from surfdom.hyperbolic import translation_length
from surfdom.surface import Word, enumerate_ball, euler_class, evaluate, length_spectrum, relator_residual
from surfdom.teichmuller.fenchel_nielsen import (
    DegenerateLength,
    FNCoords,
    fn_to_holonomy,
    holonomy_lengths,
    pants_curve_words,
    random_coords,
)
from surfdom.teichmuller.mesh import IndexMismatch, build_mesh, check_mesh
from surfdom.teichmuller.weil_petersson import QuadDiff, wp_norm, wp_pair


def test_trace_length_identity():
    j = fn_to_holonomy(FNCoords((2.0, 2.0, 2.0), (0.0, 0.0, 0.0)))
    for w in pants_curve_words(2):
        assert abs(evaluate(j, w).trace) == pytest.approx(2 * math.cosh(1.0), abs=1e-9)


def test_length_round_trip_and_euler(rng):
    for _ in range(5):
        X = random_coords(rng)
        j = fn_to_holonomy(X)
        assert np.abs(holonomy_lengths(j) - np.array(X.lengths)).max() < 1e-8
        assert relator_residual(j) < 1e-8
        assert euler_class(j) == 2


def test_centering_is_a_conjugation(ref_coords):
    a = length_spectrum(fn_to_holonomy(ref_coords, center=False), 3)
    b = length_spectrum(fn_to_holonomy(ref_coords), 3)
    assert max(abs(a[w] - b[w]) for w in a) < 1e-8


def _substitute(w: Word, images: dict[int, Word]) -> Word:
    out: list[int] = []
    for x in w.letters:
        img = images.get(abs(x), Word((abs(x),)))
        out += list(img.letters if x > 0 else img.inverse().letters)
    return Word.reduce(out)


_C2 = Word((3, 4, -3, -4))
# automorphism induced by a full twist about the i-th pants curve
_TWISTS = {
    0: {2: Word((2, 1))},
    1: {4: Word((4, 3))},
    2: {3: _C2 * Word((3,)) * _C2.inverse(), 4: _C2 * Word((4,)) * _C2.inverse()},
}


@pytest.mark.parametrize("i", [0, 1, 2])
def test_full_twist_is_dehn_twist(ref_coords, i):
    v = ref_coords.as_vector()
    v[3 + i] += v[i]
    j = fn_to_holonomy(ref_coords)
    jt = fn_to_holonomy(FNCoords.from_vector(v))
    for w in enumerate_ball(j.group, 3):
        lt = translation_length(evaluate(jt, w))
        l0 = translation_length(evaluate(j, _substitute(w, _TWISTS[i])))
        assert abs(lt - l0) < 1e-7


def test_degenerate_length():
    with pytest.raises(DegenerateLength):
        FNCoords((2.0, 1e-5, 2.0), (0.0, 0.0, 0.0))


def test_mesh_area_pairings_refinement(ref_rep):
    coarse = build_mesh(ref_rep, 0.4)
    fine = build_mesh(ref_rep, 0.2)
    for m in (coarse, fine):
        d = check_mesh(m, ref_rep)
        assert d["ok"]
        assert abs(d["area"] - 4 * math.pi) / (4 * math.pi) < 0.01
        assert d["pairing_length_mismatch"] < 1e-6
        assert d["max_edge"] <= 0.4 + 1e-9
    assert 2.5 < fine.n_faces / coarse.n_faces < 6.0


def test_mesh_with_short_sides():
    # 18-sided domain with a side of length 0.05; a mirrored point used to
    # block one boundary segment from the triangulation
    X = FNCoords((1.7921968135713997, 2.0015819805753807, 1.8035785886989595),
                 (0.1948713240722508, -0.03945147378541669, 0.06553647532851323))
    j = fn_to_holonomy(X)
    m = build_mesh(j, 0.3)
    d = check_mesh(m, j)
    assert d["ok"]
    assert abs(d["area"] - 4 * math.pi) < 1e-8


def test_mesh_rejects_bad_edge(ref_rep):
    with pytest.raises(ValueError):
        build_mesh(ref_rep, 0.6)


def test_wp_pair_examples(ref_mesh, rng):
    n = ref_mesh.n_faces
    zero = QuadDiff(np.zeros(n, dtype=complex))
    phi = QuadDiff(rng.normal(size=n) + 1j * rng.normal(size=n))
    psi = QuadDiff(rng.normal(size=n) + 1j * rng.normal(size=n))
    assert wp_pair(zero, phi, ref_mesh) == 0
    pp = wp_pair(phi, phi, ref_mesh)
    assert abs(pp.imag) < 1e-14 * abs(pp) and pp.real > 0
    assert wp_pair(phi * 2.0, phi * 2.0, ref_mesh).real == pytest.approx(4 * pp.real)
    # sesquilinear
    c = 0.3 - 1.2j
    assert wp_pair(phi * c, psi, ref_mesh) == pytest.approx(c * wp_pair(phi, psi, ref_mesh))
    assert wp_pair(phi, psi * c, ref_mesh) == pytest.approx(np.conj(c) * wp_pair(phi, psi, ref_mesh))
    assert wp_pair(psi, phi, ref_mesh) == pytest.approx(np.conj(wp_pair(phi, psi, ref_mesh)))
    with pytest.raises(IndexMismatch):
        wp_pair(QuadDiff(np.zeros(n + 1)), phi, ref_mesh)
    assert wp_norm(zero, ref_mesh) == 0.0


def test_wp_norm_of_constant_against_refined_quadrature(ref_rep):
    # phi = 1 in the Poincare chart: the norm is int 1/alpha^2 dA
    m = build_mesh(ref_rep, 0.3)
    one = QuadDiff(np.ones(m.n_faces, dtype=complex))
    n1 = wp_norm(one, m)
    fine = build_mesh(ref_rep, 0.15)
    oracle = math.sqrt(float(np.sum(fine.face_areas() / fine.conformal_factor**2)))
    assert abs(n1 - oracle) / oracle < 0.02
