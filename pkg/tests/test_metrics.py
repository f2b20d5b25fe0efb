from __future__ import annotations

import numpy as np
import pytest

from ncspectral import functions as fnc
from ncspectral import metrics as M

t = fnc.identity()


def test_parse_whitelist():
    f = fnc.parse("exp(-t) + t^2/2")
    assert f.eval(0.5) == pytest.approx(np.exp(-0.5) + 0.125)
    for bad in ("__import__('os')", "sin(t)", "t.real"):
        with pytest.raises(ValueError):
            fnc.parse(bad)


def test_general_metric_validation():
    with pytest.raises(M.MetricError, match="positive definite"):
        M.build_general([["t", 0], [0, 1]], interval=(-1, 1))
    with pytest.raises(M.MetricError, match="symmetric"):
        M.build_general([[2, "t"], [0, 2]])
    with pytest.raises(M.MetricError):
        M.build_conformal(t, d=2, interval=(-1, 1))


def test_builders_and_inverse(rng):
    g = np.array([[1.5, 0.2], [0.2, 1.0]])
    m = M.build_twisted(fnc.exp(t), g, [[2.0]])
    G = m(0.3)
    assert G.shape == (3, 3)
    np.testing.assert_allclose(G[:2, :2], g * np.exp(-0.3))
    np.testing.assert_allclose(m.inverse(0.3) @ G, np.eye(3), atol=1e-14)
    assert m.det(0.3) == pytest.approx(np.linalg.det(G))
    assert M.build_twisted(fnc.exp(t), g, None).family == "conformal"


def test_random_metric_is_spd(rng):
    for d in (2, 3, 4):
        m = M.random_spd_metric(rng, d)
        assert np.linalg.eigvalsh(m(0.9)).min() > 0


def test_t_provider_choice():
    m = M.build_conformal(fnc.exp(t), d=2)
    assert m.t_provider().method == "closed-form"
    g = M.build_general([["2 + t", 0], [0, 1]])
    assert g.t_provider().method == "quadrature"
    with pytest.raises(ValueError):
        g.t_provider("closed-form")


def test_classical_curvature_flat_for_constant(rng):
    m = M.build_constant(np.eye(2))
    h = M.FourierField.random(rng, 2)
    R = M.classical_scalar_curvature(m, h, n=32)
    assert np.abs(R).max() < 1e-12


def test_classical_matches_christoffel(rng):
    m = M.random_spd_metric(rng, 2)
    h = M.FourierField.random(rng, 2, amplitude=0.4)
    a = M.classical_scalar_curvature(m, h, n=48)
    b = M.christoffel_scalar_curvature(m, h, n=48)
    assert np.abs(a - b).max() < 1e-8 * max(1.0, np.abs(a).max())


def test_fourier_field_derivatives(rng):
    h = M.FourierField.random(rng, 2)
    x = rng.uniform(0, 2 * np.pi, size=(2, 5))  # coordinate first
    eps = 1e-6
    step = np.array([[eps], [0.0]])
    fd = (h.values(x + step) - h.values(x - step)) / (2 * eps)
    np.testing.assert_allclose(h.gradient(x)[0], fd, atol=1e-8)
