from __future__ import annotations

import numpy as np
import pytest

from ncspectral import contraction_ir as ir
from ncspectral import curvature as C
from ncspectral import metrics as M

GOLDEN_B21 = [
    "-1 T_{;1,1}(t0,t1) P01^{ij}(t0,t1) (d_id_j(h))",
    "2 T_{kl;2,1}(t0,t1) P1^{ik}(t0,t1) P2^{jl}(t0) (d_id_j(h))",
    "1 T_{kl;2,1}(t0,t1) P2^{ij}(t0) [t0,t1;P2^{kl}] (d_id_j(h))",
    "-4 T_{klmn;3,1}(t0,t1) P2^{ik}(t0) P2^{jl}(t0) [t0,t1;P2^{mn}] (d_id_j(h))",
]

GOLDEN_B22 = [
    "-1 T_{;1,1}(t0,t2) P02^{ij}(t0,t1,t2) (d_i(h) . d_j(h))",
    "1 T_{kl;1,1,1}(t0,t1,t2) P1^{ij}(t0,t1) [t1,t2;P2^{kl}] (d_i(h) . d_j(h))",
    "1 T_{kl;1,1,1}(t0,t1,t2) P1^{ik}(t0,t1) P1^{jl}(t1,t2) (d_i(h) . d_j(h))",
    "-2 T_{klmn;1,2,1}(t0,t1,t2) P1^{ik}(t0,t1) P2^{jl}(t1) [t1,t2;P2^{mn}] (d_i(h) . d_j(h))",
    "2 T_{kl;2,1}(t0,t2) [t0,t1;P1^{jk}(.,t2)] P2^{il}(t0) (d_i(h) . d_j(h))",
    "2 T_{kl;2,1}(t0,t2) [t1,t2;P1^{ik}(t0,.)] P2^{jl}(t0) (d_i(h) . d_j(h))",
    "2 T_{kl;2,1}(t0,t2) P2^{ij}(t0) [t0,t1,t2;P2^{kl}] (d_i(h) . d_j(h))",
    "-2 T_{klmn;2,1,1}(t0,t1,t2) P1^{ik}(t0,t1) P2^{jl}(t0) [t1,t2;P2^{mn}] (d_i(h) . d_j(h))",
    "-2 T_{klmn;2,1,1}(t0,t1,t2) P1^{jk}(t1,t2) P2^{il}(t0) [t0,t1;P2^{mn}] (d_i(h) . d_j(h))",
    "-2 T_{klmn;2,1,1}(t0,t1,t2) P2^{ij}(t0) [t0,t1;P2^{kl}] [t1,t2;P2^{mn}] (d_i(h) . d_j(h))",
    "-4 T_{klmn;2,1,1}(t0,t1,t2) P2^{ik}(t0) [t0,t1;P2^{jl}] [t1,t2;P2^{mn}] (d_i(h) . d_j(h))",
    "4 T_{klmnpq;2,2,1}(t0,t1,t2) P2^{ik}(t0) P2^{jl}(t1) [t0,t1;P2^{mn}] [t1,t2;P2^{pq}] (d_i(h) . d_j(h))",
    "-8 T_{klmn;3,1}(t0,t2) P2^{ik}(t0) P2^{jl}(t0) [t0,t1,t2;P2^{mn}] (d_i(h) . d_j(h))",
    "8 T_{klmnpq;3,1,1}(t0,t1,t2) P2^{ik}(t0) P2^{jl}(t0) [t0,t1;P2^{mn}] [t1,t2;P2^{pq}] (d_i(h) . d_j(h))",
]


def test_engine_b2_golden_terms():
    b21, b22 = C.engine_b2_terms()
    assert [ir.format_lowered(x) for x in b21] == GOLDEN_B21
    assert [ir.format_lowered(x) for x in b22] == GOLDEN_B22


def test_parametrix_orders():
    bs = ir.parametrix(ir.laplace_type_symbol(), 2)
    assert ir.format_expr(bs[0]).strip() == "1 B0(t0) ()"
    assert all(t.degree == -2 - k for k, b in enumerate(bs) for t in b)


def test_engine_equals_hand_on_general_metric(rng):
    m = M.random_spd_metric(rng, 3)
    eng, hand = C.b2_engine(m), C.b2_hand(m)
    for _ in range(3):
        t0, t1, t2 = rng.uniform(-1, 1, size=3)
        np.testing.assert_allclose(eng.B21(t0, t1), hand.B21(t0, t1), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(eng.B22(t0, t1, t2), hand.B22(t0, t1, t2), rtol=1e-12, atol=1e-12)


def test_dropping_p1_removes_terms():
    bs = ir.parametrix(ir.laplace_type_symbol(include=("P2", "P01", "P02")), 2)
    text = ir.format_expr(bs[2])
    assert "P1^" not in text and "P01^" in text


def test_simplify_cancels_difference():
    e = ir.parametrix(ir.laplace_type_symbol(), 1)[1]
    assert len(ir.simplify(e + e.scale(-1))) == 0


def test_xi_derivative_degree_drop():
    e = ir.laplace_type_symbol()[2]
    d = ir.xi_derivative_expr(e, ir.fresh_index())
    assert all(t.degree == e.terms[0].degree - 1 for t in d)


def test_delta_derivative_leibniz():
    # the word entry grows, then each slot of P1 splits into a partial divided difference
    e = ir.laplace_type_symbol()[1]
    d = ir.delta_derivative_expr(e, ir.fresh_index())
    assert ir.format_expr(d).splitlines() == [
        "1 xi_k P1^{ik}(t0,t1) (d_id_j(h))",
        "1 xi_k [t0,t1;P1^{jk}(.,t2)] (d_i(h) . d_j(h))",
        "1 xi_k [t1,t2;P1^{ik}(t0,.)] (d_i(h) . d_j(h))",
    ]


def test_bad_factor_rejected():
    with pytest.raises(ValueError):
        ir.factor("P2", (1, 2), (0, 1))
