"""Acceptance criteria, one per property suite, at full tolerance.

Each test prints a ``criterion N <name>: PASS/FAIL (summary)`` line and then
asserts the outcome. Run with ``pytest tests/test_acceptance.py -v -s``.
"""
import pytest

from kolmo.verify import SUITES, run_suite

CRITERIA = list(enumerate(SUITES, start=1))


@pytest.mark.parametrize("number, name", CRITERIA, ids=[name for _, name in CRITERIA])
def test_criterion(number, name, capsys):
    res = run_suite(name, seed=0)
    with capsys.disabled():
        print(f"\ncriterion {number} {name}: {'PASS' if res.passed else 'FAIL'} ({res.summary})")
    assert res.passed, res.summary
