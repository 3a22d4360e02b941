import math

import numpy as np
import pytest

from surfdom.harmonic import identity_init, solve_harmonic
from surfdom.psi import (
    GradientCheck,
    Landscape,
    NotCritical,
    PsiOptions,
    calibrate_gradient,
    eval_F,
    inverse_map_values,
    psi_forward_report,
    verify_energy_identity,
)
from surfdom.surface import SurfaceRep, elliptic_rep
from surfdom.teichmuller.fenchel_nielsen import FNCoords, fn_to_holonomy
from surfdom.teichmuller.mesh import build_mesh, check_mesh

SHIFT = np.array([0.3, -0.2, 0.25, 0.2, 0.1, -0.3])


@pytest.fixture(scope="module")
def landscape(ref_coords):
    return Landscape(ref_coords, 0.3)


def test_landscape_transported_mesh(landscape, ref_coords):
    X = FNCoords.from_vector(ref_coords.as_vector() + 0.3 * SHIFT)
    m = landscape.mesh(X)
    assert m.n_faces == landscape.mesh_ref.n_faces
    np.testing.assert_array_equal(m.faces, landscape.mesh_ref.faces)
    d = check_mesh(m, fn_to_holonomy(X))
    assert d["pairing_length_mismatch"] < 1e-6
    assert abs(d["area"] - 4 * math.pi) < 1e-8
    assert landscape.mesh(X) is m


def test_landscape_energy_of_own_structure(landscape, ref_coords, ref_rep):
    assert landscape.energy(ref_coords, ref_rep) == pytest.approx(4 * math.pi, rel=0.02)
    assert landscape.energy(ref_coords, SurfaceRep.trivial(2)) == 0.0
    assert landscape.energy(ref_coords, elliptic_rep(2, [0.3, 1.1, -0.7, 2.0])) == 0.0


def test_F_is_smooth_along_a_segment(landscape, ref_coords, ref_rep):
    # transported meshes make F smooth: a quartic fits nine samples to rounding level
    rho = SurfaceRep.trivial(2)
    ts = np.linspace(-0.2, 0.2, 9)
    vals = np.array([eval_F(FNCoords.from_vector(ref_coords.as_vector() + t * SHIFT), ref_rep, rho,
                            landscape=landscape, with_grad=False).F for t in ts])
    fit = np.polyval(np.polyfit(ts, vals, 4), ts)
    assert np.abs(fit - vals).max() < 1e-5 * np.ptp(vals)
    # F(., j0, trivial) is minimal at the structure of j0
    assert np.argmin(vals) == 4


def test_calibration_recovers_constant():
    rng = np.random.default_rng(1)
    checks = [GradientCheck(None, 4.0 * p, p, 1e-3) for p in rng.normal(size=(3, 6))]
    c, mism = calibrate_gradient(checks)
    assert c == pytest.approx(4.0, rel=1e-12)
    assert max(mism) < 1e-12
    assert all(chk.constant == c for chk in checks)


def test_inverse_map_round_trip(ref_rep, ref_coords):
    j2 = fn_to_holonomy(FNCoords.from_vector(ref_coords.as_vector() + 0.5 * SHIFT))
    m2 = build_mesh(j2, 0.4)
    k, _ = solve_harmonic(m2, ref_rep, init=identity_init(m2, ref_rep))
    tri = k.values[m2.faces]
    pts = tri.mean(axis=1)
    back = inverse_map_values(m2, k.values, ref_rep, j2, pts)
    np.testing.assert_allclose(back, m2.klein[m2.faces].mean(axis=1), atol=1e-9)
    back_v = inverse_map_values(m2, k.values, ref_rep, j2, k.values)
    np.testing.assert_allclose(back_v, m2.klein, atol=1e-9)


def test_psi_forward_trivial_returns_structure(ref_coords):
    X, report = psi_forward_report(ref_coords, SurfaceRep.trivial(2), PsiOptions(target_edge=0.4))
    assert np.abs(X.as_vector() - ref_coords.as_vector()).max() < 1e-3
    assert report.target_norm == 0.0


def test_not_critical_raised(ref_coords, ref_rep):
    X1 = FNCoords.from_vector(ref_coords.as_vector() + SHIFT)
    with pytest.raises(NotCritical):
        verify_energy_identity(X1, ref_coords, ref_rep, SurfaceRep.trivial(2), PsiOptions(target_edge=0.4))


def test_energy_identity_at_critical_point(ref_coords, ref_rep):
    X2 = FNCoords.from_vector(ref_coords.as_vector() + 0.5 * SHIFT)
    r = verify_energy_identity(ref_coords, X2, ref_rep, SurfaceRep.trivial(2), PsiOptions(target_edge=0.4))
    assert r.mismatch < 0.03
    assert r.monotone
