import pytest

RESULTS = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def record(request):
    """Store one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(RESULTS, {})

    def put(criterion, ok, detail):
        lines[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[criterion])
        return ok

    return put


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(RESULTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
