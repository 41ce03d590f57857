"""Shared test plumbing: the acceptance-criteria result banner.

Acceptance tests report a one-line verdict through the ``criterion``
fixture; the collected lines are printed as a summary section at the end
of the pytest run so the pass/fail state of every numbered check is
visible in one place.
"""

import pytest

_lines: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        verdict = "PASS" if passed else "FAIL"
        _lines[number] = f"criterion {number:02d} {verdict}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_lines):
        terminalreporter.line(_lines[number])
