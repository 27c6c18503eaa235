"""Acceptance criteria 1-10, each at its stated tolerance and time budget.

Every check prints one PASS/FAIL line; failing sub-checks are listed in
the assertion message.
"""
import pytest

from eplab import verify

CHECKS = verify.suite_checks("all")


@pytest.mark.slow
@pytest.mark.parametrize("check", CHECKS, ids=[f"acc{verify._ORDER[c]:02d}_{c.__name__}" for c in CHECKS])
def test_acceptance(check, capsys):
    res = check()
    with capsys.disabled():
        print("\n" + res.line())
    failed = [k for k, ok in res.details["checks"].items() if not ok]
    assert res.passed, f"{res.name}: failed {failed}; details {res.details}"
