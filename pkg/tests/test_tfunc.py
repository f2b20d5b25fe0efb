from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
import pytest

from ncspectral import functions as fnc
from ncspectral import metrics as M
from ncspectral.quadrature import QuadratureSpec, integrate_simplex
from ncspectral.tfunc import (NotPositiveDefinite, TFunctionQuery, _m_func, antiderivative,
                              coincident_tensor, conformal_tensor, t11_dim2_branches, t_integral,
                              tfunc_conformal, tfunc_dim2, tfunc_dt4, tfunc_dt4_paper, tfunc_quadrature,
                              wick_pairings, wick_tensor)

t = fnc.identity()
P0 = np.array([[2.0, 0.0], [0.0, 1.0]])
P1 = np.array([[1.0, 0.3], [0.3, 1.5]])
TIGHT = QuadratureSpec(atol=1e-14, rtol=1e-14)


def test_dim2_frozen_values():
    # [DERIVED] one-dimensional mpmath quadrature of det(s P0 + (1-s) P1)^(-1/2)
    T11 = t_integral([P0, P1], (1, 1), rank=0, quad=TIGHT)
    assert T11 == pytest.approx(0.74750714431293468493, rel=1e-12)
    T21 = t_integral([P0, P1], (2, 1), rank=2, quad=TIGHT)
    np.testing.assert_allclose(T21, [[0.11321174440495359579, -0.010271278760945888005],
                                     [-0.010271278760945888005, 0.15794829707026793568]], rtol=1e-11)


def test_dim2_closed_forms_match_quadrature():
    r = tfunc_dim2(M.build_general([[2.0, 0.0], [0.0, 1.0]]).g, 0.0, 0.0)
    assert r.branch == "a=0"
    P = lambda s: (P0 if s == 0 else P1)
    m = M.build_general([["2 - t", "0.3*t"], ["0.3*t", "1 + 0.5*t"]], interval=(0.0, 1.0))
    r = tfunc_dim2(m.g, 0.0, 1.0)
    # g(t) here plays the role of P_2
    np.testing.assert_allclose(r.T21, t_integral([P0, P1], (2, 1), rank=2, quad=TIGHT), rtol=1e-12)
    assert r.T11 == pytest.approx(0.74750714431293468493, rel=1e-13)
    assert r.branch in ("a>0", "a<0")


@pytest.mark.parametrize("a,b,c", [(0.3, -0.5, 1.2), (-0.4, 0.2, 1.0), (0.0, 0.7, 1.1)])
def test_textbook_branches(a, b, c):
    want = float(mpmath.quad(lambda s: (c + b * s + a * s * s) ** -0.5, [0, 1]))
    assert t11_dim2_branches(a, b, c) == pytest.approx(want, rel=1e-13)


def test_wick_pairings_counts():
    # argument is the number of pairs; counts are (2k-1)!!
    assert [len(wick_pairings(k)) for k in (0, 1, 2, 3)] == [1, 1, 3, 15]
    with pytest.raises(ValueError):
        wick_pairings(-1)


def test_wick_tensor_symmetric(rng):
    A = rng.normal(size=(3, 3))
    A = A + A.T
    W = wick_tensor(A, 4)
    for p in itertools.permutations(range(4)):
        np.testing.assert_allclose(np.transpose(W, p), W, atol=1e-14)
    assert W[0, 0, 1, 1] == pytest.approx(A[0, 0] * A[1, 1] + 2 * A[0, 1] ** 2)


def test_coincident_is_beta_integral(rng):
    A = rng.normal(size=(2, 2))
    P = A @ A.T + np.eye(2)
    got = t_integral([P, P, P], (2, 1, 1), rank=4, quad=TIGHT)
    np.testing.assert_allclose(got, coincident_tensor(P, (2, 1, 1), 4), rtol=1e-11, atol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_conformal_closed_form(d, rng):
    A = rng.normal(size=(d, d)) * 0.3
    g = np.eye(d) + A @ A.T
    x = [0.7, 1.6, 1.1]
    mats = [xi * np.linalg.inv(g) for xi in x]
    for alpha, rank in (((1, 1, 1), 2), ((2, 1, 1), 4)):
        np.testing.assert_allclose(conformal_tensor(alpha, d, x, g, rank), t_integral(mats, alpha, rank=rank, quad=TIGHT),
                                   rtol=1e-10, atol=1e-13)


def test_log_branch_selected():
    assert antiderivative(1.0, 1)[1] == "log"
    assert antiderivative(3.0, 3)[1] == "log"
    assert antiderivative(4.0, 3)[1] == "power"
    assert antiderivative(1.5, 2)[1] == "power"
    assert tfunc_conformal((1, 1), 2, [1.0, 1.0]) == pytest.approx(1.0)


def test_dt4_near_degenerate_continuity():
    f, ft = fnc.exp(t * 0.4), fnc.exp(t * 0.4) * 2.0
    g, gt = np.eye(2), np.array([[1.5, 0.2], [0.2, 1.0]])
    r = tfunc_dt4(f, ft, g, gt, 0.1, 0.3)
    assert r.near_degenerate
    lit = tfunc_dt4_paper(f, fnc.exp(t * (0.4 + 1e-6)) * 2.0, g, gt, 0.1, 0.3)
    assert r.T11 == pytest.approx(lit[0], rel=1e-5)
    with pytest.raises(ZeroDivisionError):
        tfunc_dt4_paper(f, ft, g, gt, 0.1, 0.3)


def test_m_func_accuracy():
    mpmath.mp.dps = 40
    for u in (-0.5, -0.1, -3e-3, 1e-6, 1e-3, 0.05, 0.1, 2.0):
        R = mpmath.mpf(1 + u)
        want = (1 + R * mpmath.log(R) - R) / (R - 1) ** 2
        assert _m_func(1 + u) == pytest.approx(float(want), rel=1e-14)
    mpmath.mp.dps = 15


def test_query_validation():
    m = M.build_conformal(fnc.exp(t), d=2)
    q = TFunctionQuery(m.ginv, (0, 1), (2, 1), (0.1, 0.2))
    assert tfunc_quadrature(q) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        TFunctionQuery(m.ginv, (0,), (2, 1), (0.1, 0.2))
    with pytest.raises(ValueError):
        TFunctionQuery(m.ginv, (), (1, 1), (0.1,))


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        t_integral([np.eye(2), -np.eye(2)], (1, 1), rank=0)


def test_simplex_rule_exact_for_polynomials():
    val = integrate_simplex(lambda s: s[:, 0] ** 2 * s[:, 1], 2)
    assert val == pytest.approx(2 / math.factorial(5), rel=1e-14)
