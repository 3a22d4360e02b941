import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfdom.hyperbolic import MoebiusMap, Point, apply, dist, translation_length
from surfdom.surface import (
    BallTooLarge,
    SurfaceGroup,
    SurfaceRep,
    Word,
    apply_sigma,
    axis_rep,
    ball_size,
    detect_parabolic,
    elliptic_rep,
    enumerate_ball,
    euler_class,
    evaluate,
    is_fuchsian,
    length_spectrum,
    relator_residual,
    spectrum_residual,
)
from surfdom.teichmuller.fenchel_nielsen import FNCoords, fn_to_holonomy

G2 = SurfaceGroup(2)
letters = st.lists(st.sampled_from([1, 2, 3, 4, -1, -2, -3, -4]), max_size=12)


def test_ball_counts():
    assert len(enumerate_ball(G2, 1)) == 8
    assert len(enumerate_ball(G2, 2)) == 8 + 8 * 7
    assert enumerate_ball(G2, 0, allow_empty=True) == []
    with pytest.raises(ValueError):
        enumerate_ball(G2, 0)
    assert ball_size(G2, 3) == 8 + 56 + 392
    with pytest.raises(BallTooLarge):
        enumerate_ball(G2, 9, cap=1000)


def test_ball_order_and_reduction():
    words = enumerate_ball(G2, 3)
    lengths = [len(w) for w in words]
    assert lengths == sorted(lengths)
    assert len(set(words)) == len(words)


@given(letters)
def test_word_reduce_parse_round_trip(xs):
    w = Word.reduce(xs)
    assert Word.parse(str(w)) == w
    assert (w * w.inverse()) == Word(())


def test_unreduced_word_rejected():
    with pytest.raises(ValueError):
        Word((1, -1))


def test_evaluate_examples(ref_rep):
    assert np.allclose(evaluate(ref_rep, Word(())).m, np.eye(2))
    assert relator_residual(ref_rep) < 1e-8
    assert relator_residual(SurfaceRep.trivial(2)) == 0.0


def test_relator_residual_scales_linearly(ref_rep, rng):
    E = rng.normal(size=(4, 2, 2))
    res = []
    for delta in (1e-3, 1e-4):
        mats = [g.m + delta * e for g, e in zip(ref_rep.images, E)]
        mats = [m / math.sqrt(np.linalg.det(m)) for m in mats]
        res.append(relator_residual(SurfaceRep.from_matrices(2, mats)))
    assert 5 < res[0] / res[1] < 20


def test_length_spectrum_examples(ref_rep):
    ell = elliptic_rep(2, [0.3, 0.5, -0.2, 0.7])
    assert max(length_spectrum(ell, 3).values()) == 0.0
    assert max(length_spectrum(SurfaceRep.trivial(2), 2).values()) == 0.0
    spec = length_spectrum(ref_rep, 1)
    a1 = ref_rep.images[0]
    assert spec[Word((1,))] == pytest.approx(2 * math.acosh(abs(a1.trace) / 2))
    # orbit minimisation oracle for l(a1)
    from scipy.optimize import minimize

    f = lambda v: dist(Point(v[0], math.exp(v[1])), apply(a1, Point(v[0], math.exp(v[1]))))
    best = min(minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-11, "fatol": 1e-13}).fun
               for x0 in ([0, 0], [1, 1], [-1, -1], [3, 0]))
    assert abs(best - spec[Word((1,))]) < 1e-6


def test_length_spectrum_conjugation_invariant(ref_rep):
    h = MoebiusMap(np.array([[1.3, 0.4], [-0.2, 0.7]]) / math.sqrt(1.3 * 0.7 + 0.08))
    a = length_spectrum(ref_rep, 3)
    b = length_spectrum(ref_rep.conjugate(h), 3)
    assert max(abs(a[w] - b[w]) for w in a) < 1e-9


def test_euler_class_examples(ref_rep):
    assert euler_class(SurfaceRep.trivial(2)) == 0
    assert euler_class(ref_rep) == 2
    assert euler_class(apply_sigma(ref_rep)) == -2
    assert euler_class(elliptic_rep(2, [0.3, 0.5, -0.2, 0.7])) == 0
    assert is_fuchsian(ref_rep) and not is_fuchsian(SurfaceRep.trivial(2))


def test_sigma_is_involution(ref_rep):
    twice = apply_sigma(apply_sigma(ref_rep))
    assert all(np.allclose(a.m, b.m) for a, b in zip(twice.images, ref_rep.images))
    triv = apply_sigma(SurfaceRep.trivial(2))
    assert all(np.allclose(g.m, np.eye(2)) for g in triv.images)


@given(st.lists(st.floats(-1e-3, 1e-3), min_size=6, max_size=6))
@settings(max_examples=15, deadline=None)
def test_euler_class_locally_constant(delta):
    X = FNCoords((2.0, 2.2, 1.8), (0.1, -0.2, 0.3))
    j = fn_to_holonomy(FNCoords.from_vector(X.as_vector() + np.array(delta)))
    assert euler_class(j) == 2


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
@settings(max_examples=25, deadline=None)
def test_milnor_wood(angles):
    rep = elliptic_rep(2, angles)
    assert abs(euler_class(rep)) <= 2


def test_detect_parabolic_examples(ref_rep):
    unip = SurfaceRep.from_matrices(2, [np.array([[1.0, t], [0.0, 1.0]]) for t in (0.3, -1.0, 2.0, 0.5)])
    d = detect_parabolic(unip)
    assert d is not None and d.is_boundary and d.fixed_point.is_infinite
    assert np.allclose(d.morphism, 0.0)
    ts = [0.1, 0.05, -0.08, 0.02]
    d = detect_parabolic(axis_rep(2, ts))
    assert d is not None and d.is_boundary
    # the Busemann closed form -ln y gives m(a_i) = -t_i at infinity, or +t_i at 0
    assert np.allclose(np.abs(d.morphism), np.abs(ts))
    assert spectrum_residual(axis_rep(2, ts), d, 3) < 1e-6
    assert detect_parabolic(ref_rep) is None
    d = detect_parabolic(elliptic_rep(2, [0.3, 0.5, -0.2, 0.7]))
    assert d is not None and not d.is_boundary


def test_parabolic_morphism_additive():
    rep = axis_rep(2, [0.3, -0.1, 0.2, 0.05])
    d = detect_parabolic(rep)
    words = enumerate_ball(rep.group, 2)
    for w1 in words[:20]:
        for w2 in words[:20]:
            assert abs(d.evaluate(w1 * w2) - d.evaluate(w1) - d.evaluate(w2)) < 1e-12
    assert abs(d.evaluate(rep.group.relator)) < 1e-12
    for w in words:
        assert abs(abs(d.evaluate(w)) - translation_length(evaluate(rep, w))) < 1e-9
