"""Collects acceptance-criterion verdicts and prints one line each at exit."""

import pytest

_CRITERION_LINES: dict[int, str] = {}


def record_criterion(number: int, description: str, passed: bool,
                     detail: str = "") -> None:
    verdict = "PASS" if passed else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    _CRITERION_LINES[number] = (
        f"criterion {number:>2} {verdict}  {description}{suffix}")


@pytest.fixture
def criterion():
    """Record a verdict for the terminal summary, then enforce it."""

    def _check(number: int, description: str, passed: bool, detail: str = ""):
        record_criterion(number, description, passed, detail)
        assert passed, f"criterion {number}: {description} [{detail}]"

    return _check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])
