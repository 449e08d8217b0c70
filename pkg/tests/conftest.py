import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line ``CRITERION n  PASS/FAIL  detail`` and assert it."""

    def record(number, name, ok, detail=""):
        _CRITERIA.append((number, name, bool(ok), detail))
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_CRITERIA, key=lambda c: str(c[0])):
        terminalreporter.write_line(f"CRITERION {str(number):<4} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
