"""Acceptance suite: one PASS/FAIL line per criterion, seed 0.

Run directly (``python3 tests/test_acceptance.py``) or through pytest, where
the lines are repeated in the terminal summary.
"""

from __future__ import annotations

import sys

import pytest

from ncspectral import verification as V

SEED = 0
LINES: list = []


@pytest.fixture(scope="module")
def results():
    out = {}

    def keep(check):
        LINES.append(check.line())
        print(check.line())
    for c in V.run_suite(SEED, progress=keep):
        out[c.criterion] = c
    return out


@pytest.mark.parametrize("criterion", sorted(V.CHECKS))
def test_criterion(results, criterion):
    c = results[criterion]
    assert c.passed, f"{c.line()}\n{c.detail}"


def main() -> int:
    checks = V.run_suite(SEED, progress=lambda c: print(c.line()))
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
