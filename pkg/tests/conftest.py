import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; returns ``ok`` so the test can assert on it."""

    def record(name: str, ok: bool, detail: str) -> bool:
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
