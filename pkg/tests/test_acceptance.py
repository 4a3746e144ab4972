"""Acceptance criteria. Each test prints one PASS/FAIL line with its measured values."""
import pytest

from weak2strong.acceptance import CHECKS, run_check


@pytest.mark.parametrize("number", [c[0] for c in CHECKS], ids=[f"criterion_{c[0]:02d}_{c[1].replace(' ', '_')}" for c in CHECKS])
def test_criterion(number, capsys):
    result = run_check(number)
    with capsys.disabled():
        print()
        print(result.line())
    assert result.passed, result.line()
