import pytest

CRITERIA = range(1, 12)


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the summary prints them in order."""

    def record(number: int, ok: bool, detail: str) -> bool:
        request.config.acceptance_lines[number] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.acceptance_lines
    ran = any("test_acceptance" in r.nodeid
              for key in ("passed", "failed", "error")
              for r in terminalreporter.stats.get(key, []))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        if n in lines:
            ok, detail = lines[n]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
        else:
            terminalreporter.write_line(f"FAIL criterion {n:2d}: not evaluated")
