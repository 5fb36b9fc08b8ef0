import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Print one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
