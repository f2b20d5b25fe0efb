from __future__ import annotations

import numpy as np
import pytest

from ncspectral import verification as V


def test_check_line_format():
    c = V.Check(3, "demo", 1e-7, 2.5e-9, True)
    assert c.line() == "[PASS]  3 demo: observed 2.500e-09 (tol 1.0e-07)"
    assert V._check(1, "x", 1e-9, 2e-9, {}).passed is False


def test_negative_control_gauss_bonnet_fails():
    rng = np.random.default_rng(7)
    good = V.check_gauss_bonnet(rng, samples=30)
    bad = V.check_gauss_bonnet(np.random.default_rng(7), samples=30, fault="sign_flip")
    assert good.passed
    assert not bad.passed and bad.observed > 1e-3


def test_negative_control_twisted_fails():
    bad = V.check_twisted_total(np.random.default_rng(1), points=2, fault="sign_flip")
    assert not bad.passed and bad.observed > 1e-3


def test_unknown_fault_rejected():
    with pytest.raises(ValueError):
        V.check_twisted_total(np.random.default_rng(1), points=1, fault="nope")


def test_seed_stability():
    a = [c.to_dict() for c in V.run_suite(11, [4, 5, 7], options={7: {"inputs": 5}})]
    b = [c.to_dict() for c in V.run_suite(11, [4, 5, 7], options={7: {"inputs": 5}})]
    assert a == b


def test_subset_reproduces_full_run_numbers():
    one = V.run_suite(3, [5])[0]
    both = V.run_suite(3, [4, 5])[1]
    assert one.to_dict() == both.to_dict()


def test_dd_triad_small():
    assert V.check_dd_triad(np.random.default_rng(0), cases=30).passed


def test_ir_oracle_small():
    out = V.ir_oracle_check(np.random.default_rng(2), 3)
    assert out["ir_simplify"] == 0
    assert max(out.values()) < 1e-12


def test_tfunc_identities_small():
    assert V.check_tfunc_identities(np.random.default_rng(4), samples=1).passed


def test_commutative_small():
    assert V.check_commutative(np.random.default_rng(5), n=32).passed
