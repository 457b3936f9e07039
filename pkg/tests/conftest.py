import pytest

_RESULTS = []


@pytest.fixture
def record():
    """Record one acceptance line; printed again in the terminal summary."""
    def _record(name, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        print(line)
        _RESULTS.append(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
