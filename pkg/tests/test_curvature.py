from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

from ncspectral import curvature as C
from ncspectral import functions as fnc
from ncspectral import metrics as M
from ncspectral import verification as V

t = fnc.identity()
E2 = C.kh_conformal(2, fnc.exp(t))
E4 = C.kh_conformal(4, fnc.exp(t))


# [PAPER] one- and two-variable displays (label-corrected), evaluated in 30-digit arithmetic
def test_special_values_frozen():
    assert E2.K(0.0, 0.7) == pytest.approx(-0.16199355774924730504, rel=1e-13)
    assert E4.K(0.0, 0.7) == pytest.approx(-0.35958192586327891807, rel=1e-13)
    assert E4.H(0.0, 0.7, 0.3) == pytest.approx(0.14087444171307381762, rel=1e-12)
    assert E2.H(0.0, 0.7, 0.3) == pytest.approx(0.0060023785584544607584, rel=1e-11)


def test_label_swap_one_variable_display_is_K():
    s1 = 0.7
    disp = float(V.disp_K4_one(mpmath.mpf(s1)))
    assert E4.K(0.0, s1) == pytest.approx(disp, rel=1e-13)
    # read literally as an H function it does not match
    assert abs(E4.H(0.0, s1, s1) - disp) > 1e-2
    assert abs(E4.H(0.0, 0.0, s1) - disp) > 1e-2


def test_label_swap_two_variable_display_is_H():
    s1, s2 = 0.6, -1.1
    disp = float(V.disp_H2_two(mpmath.mpf(s1), mpmath.mpf(s2)))
    assert E2.H(0.0, s1, s1 + s2) == pytest.approx(disp, rel=1e-12)
    assert abs(E2.H(0.0, s1, s2) - disp) > 1e-3


def test_d3_uses_exp_2t_and_thirds():
    e3 = C.kh_conformal(3, fnc.exp(t * 2.0))
    s1 = 0.9
    assert e3.K(0.0, s1 / 3) == pytest.approx(float(V.disp_K3_one(mpmath.mpf(s1))), rel=1e-12)
    # the literal parenthesization is off by far more than rounding
    assert abs(e3.K(0.0, s1 / 3) - float(V.disp_K3_one_literal(mpmath.mpf(s1)))) > 1e-2


@pytest.mark.parametrize("d", [3, 5, 6, 7])
def test_general_d_one_variable(d):
    Kd = C.kh_conformal(d, fnc.exp(t))
    for s1 in (-1.3, 0.4, 1.7):
        assert Kd.K(0.0, s1) == pytest.approx(float(V.disp_Kd_one(d, mpmath.mpf(s1))), rel=1e-12)


@pytest.mark.parametrize("d", [3, 4, 6])
def test_classical_limits(d):
    f = fnc.exp(t * -2.0)
    KH = C.kh_conformal(d, f)
    x = 0.3
    assert KH.K(x, x) == pytest.approx((d - 1) / 3 * math.exp((d - 2) * x), rel=1e-10)
    assert KH.H(x, x, x) == pytest.approx((d - 2) * (d - 1) / 6 * math.exp((d - 2) * x), rel=1e-10)


def test_homogeneity():
    for d in (2, 3, 4):
        assert C.homogeneity_check(C.kh_conformal(d, fnc.exp(t)), samples=5) < 1e-12


def test_near_diagonal_continuity():
    # H_2 vanishes on the diagonal and grows linearly off it; the slope must
    # stay put as the points merge
    assert abs(E2.H(0.2, 0.2, 0.2)) < 1e-15
    slopes = [E2.H(0.2, 0.2 + eps, 0.2 - eps) / eps for eps in (1e-4, 1e-7, 1e-10)]
    assert max(slopes) - min(slopes) < 1e-6 * abs(slopes[0])


def test_engine_matches_conformal_closed_form(rng):
    g = np.array([[1.2, 0.1, 0.0], [0.1, 0.9, 0.2], [0.0, 0.2, 1.1]])
    f = fnc.exp(t * 0.6)
    m = M.build_conformal(f, g)
    den = C.b2_engine(m)
    KH = C.kh_conformal(3, f)
    for _ in range(3):
        t0, t1, t2 = rng.uniform(-1, 1, size=3)
        K, H = V.conformal_reference(m, KH, t0, t1, t2)
        np.testing.assert_allclose(den.B21(t0, t1), K, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(den.B22(t0, t1, t2), H, rtol=1e-9, atol=1e-12)


def test_engine_matches_twisted_closed_form():
    g = np.array([[1.0, 0.2], [0.2, 1.5]])
    gt = np.array([[2.0]])
    m = M.build_twisted(t, g, gt, interval=(0.5, 2.0))
    conf, til = C.kh_twisted(2, t)
    den = C.b2_engine(m)
    vol = math.sqrt(np.linalg.det(g) * np.linalg.det(gt))
    B = den.B21(0.7, 1.3)
    np.testing.assert_allclose(B[:2, :2], vol * np.linalg.inv(g) * conf.K(0.7, 1.3), rtol=1e-10)
    assert B[2, 2] == pytest.approx(vol / 2.0 * til.K(0.7, 1.3), rel=1e-10)
    np.testing.assert_allclose(B[:2, 2], 0.0, atol=1e-14)


def test_twisted_r1_has_no_conformal_block():
    conf, til = C.kh_twisted(1, t)
    assert conf is None and til.kind == "twisted"


def test_kernel_equals_density_route(rng):
    m = M.random_spd_metric(rng, 3)
    K = C.total_curvature_kernel(m)
    den = C.b2_engine(m)
    t0, t1 = -0.4, 0.5
    np.testing.assert_allclose(K.F_S(t0, t1), C.total_curvature_from_b2(den, t0, t1), rtol=1e-8, atol=1e-10)


def test_fs_interpolation_is_continuous(rng):
    m = M.random_spd_metric(rng, 2)
    K = C.total_curvature_kernel(m)
    inside = K.F_S(0.1, 0.1 + 0.019)
    outside = K.F_S(0.1, 0.1 + 0.0201)
    assert np.abs(inside - outside).max() < 1e-6


def test_gauss_bonnet_small(rng):
    m = M.build_general([["2 + t", "0.2*t"], ["0.2*t", "exp(-t)"]])
    out = C.gauss_bonnet_check(m, samples=40, rng=rng)
    assert out["max_abs"] < 1e-9
    with pytest.raises(ValueError):
        C.gauss_bonnet_check(M.random_spd_metric(rng, 3), samples=1)


def test_commutative_limit(rng):
    m = M.random_spd_metric(rng, 2)
    h = M.FourierField.random(rng, 2, amplitude=0.4)
    R = C.commutative_curvature(C.b2_engine(m), m, h, n=32)
    Rc = M.classical_scalar_curvature(m, h, n=32)
    G = np.asarray(m.g.eval(h.values(M.torus_grid(32, 2))))
    ref = np.sqrt(np.linalg.det(G)) * Rc / 6
    assert np.abs(R - ref).max() < 1e-6 * np.abs(ref).max()


def test_constant_metric_has_zero_density():
    m = M.build_constant(np.array([[1.0, 0.3], [0.3, 2.0]]))
    den = C.b2_engine(m)
    assert np.abs(den.B21(0.1, 0.5)).max() < 1e-15
    assert np.abs(den.B22(0.1, 0.5, -0.3)).max() < 1e-15
