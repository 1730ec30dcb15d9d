"""Runs every acceptance criterion at its stated tolerance.

Each test prints one ``[PASS]``/``[FAIL]`` line, visible even under output
capture. Criteria 4-8 are Monte Carlo runs and take minutes on one core.
"""
import pytest

from secondorder.acceptance import CRITERIA, MONTE_CARLO, ROOT_SEED


@pytest.mark.parametrize(
    "number",
    [pytest.param(k, marks=pytest.mark.slow) if k in MONTE_CARLO else k for k in sorted(CRITERIA)],
)
def test_criterion(number, capsys):
    result = CRITERIA[number](seed=ROOT_SEED)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.number == number
    assert result.passed, result.line()
