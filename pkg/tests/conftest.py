import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def accept(request):
    """Record one acceptance line, then assert it."""
    lines = request.config.stash[_LINES]

    def record(criterion: int, name: str, ok: bool, detail: str = "") -> None:
        lines.append((criterion, f"[{'PASS' if ok else 'FAIL'}] criterion {criterion:2d} {name}: {detail}"))
        print(lines[-1][1])
        assert ok, f"criterion {criterion} ({name}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
