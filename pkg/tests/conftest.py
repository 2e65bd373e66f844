import pytest

_RECORDS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, print it, then assert it."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _RECORDS.append((name, ok, detail))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RECORDS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _RECORDS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
