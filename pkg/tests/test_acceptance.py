"""Acceptance suite: every criterion at its full sample sizes and tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  Criterion 7 trains the sequence net and takes several
minutes.
"""

import pytest

from claimsbacklog import acceptance

RESULTS = {}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    res = acceptance.CRITERIA[number](quick=False)
    RESULTS[number] = res
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.details
