import pytest

_LINES: list[str] = []


@pytest.fixture
def record(request):
    """Print one verdict line immediately and again in the terminal summary."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def _record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
        _LINES.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
