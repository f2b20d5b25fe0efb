from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncspectral import functions as fnc
from ncspectral.dd_calculus import (Atom, DDConfig, MultiScalarFunction, dd, dd_explicit,
                                    dd_hermite_genocchi, dd_node_derivative, dd_recursive, partial_dd)

t = fnc.identity()


def test_exp_three_nodes_frozen():
    # [DERIVED] explicit sum in 30-digit arithmetic
    assert dd([1.0, 2.0, 4.0], fnc.exp(t)) == pytest.approx(6.3112575655450631445, rel=1e-14)


def test_confluent_log_frozen():
    # [DERIVED] exact recursion on repeated nodes
    assert dd([1.0, 1.0, 1.0, 3.0], fnc.log(t)) == pytest.approx(0.1373265360835137114, rel=1e-13)


def test_repeated_node_is_scaled_derivative():
    f = fnc.exp(t * 0.7)
    assert dd([0.3] * 4, f) == pytest.approx(0.7 ** 3 * math.exp(0.21) / 6, rel=1e-14)


def test_order_independent(rng):
    f = t ** 1.5
    x = rng.uniform(0.5, 3, size=5)
    assert dd(x, f) == pytest.approx(dd(x[::-1], f), rel=1e-13)


def test_near_confluent_continuity():
    f = fnc.log(t)
    base = dd([1.0, 1.0, 2.0], f)
    for eps in (1e-3, 1e-6, 1e-9, 1e-12):
        assert dd([1.0, 1.0 + eps, 2.0], f) == pytest.approx(base, abs=2 * eps)


def test_methods_agree(rng):
    f = fnc.sqrt(t) * fnc.exp(-t)
    x = np.array([0.6, 1.1, 1.9, 2.7])
    ref = dd(x, f)
    for other in (dd_recursive, dd_explicit, dd_hermite_genocchi):
        assert other(x, f) == pytest.approx(ref, rel=1e-10)


def test_cluster_threshold_is_configurable():
    f = fnc.exp(t)
    x = [0.0, 0.01, 0.02]
    assert dd(x, f, DDConfig(cluster_tol=1e-9)) == pytest.approx(dd(x, f), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=6), st.integers(0, 1))
def test_polynomial_vanishes_past_degree(xs, k):
    poly = t * 3.0 + 1.0 if k else fnc.const(2.0)
    assert abs(dd(xs, poly)) < 1e-8


def test_node_derivative_matches_repetition():
    f = fnc.log(t)
    x = [1.0, 2.0]
    got = dd_node_derivative(x, f, [1, 0])
    assert got == pytest.approx(dd([1.0, 1.0, 2.0], f), rel=1e-13)


def test_partial_dd_of_product():
    F = MultiScalarFunction.from_atoms(2, [Atom(fnc.exp(t), (0,)), Atom(t * t, (1,))])
    val = partial_dd(F, 0, (0.2, 0.9, 1.4))
    assert val == pytest.approx((math.exp(0.2) - math.exp(0.9)) / (0.2 - 0.9) * 1.4 ** 2, rel=1e-13)


def test_bad_nodes_rejected():
    with pytest.raises(ValueError):
        dd([], fnc.exp(t))
    with pytest.raises(ValueError):
        dd([0.0, float("nan")], fnc.exp(t))


@pytest.mark.parametrize("f,x", [(fnc.log(t), [0.0, 1.0]), (fnc.sqrt(t), [-1.0, 1.0]), (t ** -1.0, [0.0, 2.0])])
def test_nodes_outside_domain_rejected(f, x):
    with pytest.raises(fnc.DomainError):
        dd(x, f)
