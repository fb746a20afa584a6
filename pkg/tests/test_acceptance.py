"""Acceptance criteria at their stated tolerances, one pass/fail line each.

Every criterion runs through the same check functions as ``evalbias verify``.
Criterion 12 is expected to fail; it stays strict so the failure is visible.
"""

import pytest

from evalbias.verify import CHECKS, run_check


def _param(num, name, level):
    marks = [pytest.mark.slow] if level == "full" else []
    return pytest.param(num, id=f"{num:02d}-{name.replace(' ', '-')}", marks=marks)


@pytest.mark.parametrize("number", [_param(num, name, level) for num, name, _, level in CHECKS])
def test_criterion(number, capsys):
    result = run_check(number)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
