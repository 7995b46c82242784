import pytest

_CRITERIA = {}


class CriterionLog:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.setdefault(number, []).append((ok, line))
        print(line)
        return ok


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        for _, line in _CRITERIA[number]:
            terminalreporter.write_line(line)
