import pytest

_LINES: list[tuple[str, bool, str]] = []


class AcceptanceLog:
    def record(self, criterion: str, passed: bool, detail: str = "") -> bool:
        _LINES.append((criterion, bool(passed), detail))
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _LINES:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
