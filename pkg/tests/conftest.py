import pytest

_CRITERIA = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""
    def report(number: int, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        print(line)
        _CRITERIA.append(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
