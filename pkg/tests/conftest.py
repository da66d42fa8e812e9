import pytest

_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record a one-line PASS/FAIL verdict; all verdicts are echoed after the run."""
    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        _LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
