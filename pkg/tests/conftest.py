import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for the terminal summary, then assert it."""

    def check(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
