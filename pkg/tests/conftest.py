import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """``criterion(ok, detail)`` records one PASS/FAIL line and then asserts."""
    name = request.node.name.removeprefix("test_").split("_")[0].upper().replace("AC", "AC-")

    def check(ok: bool, detail: str):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
