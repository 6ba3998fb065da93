import pytest

VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(n, ok, detail):
        VERDICTS[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(VERDICTS[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
