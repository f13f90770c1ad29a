import pytest

VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture(scope="session")
def verdict(request):
    """record(number, checks, seconds, limit): print and keep one PASS/FAIL
    line per acceptance criterion; returns the failed check names."""
    lines = request.config.stash[VERDICTS]

    def record(number, checks, seconds=None, limit=None):
        checks = dict(checks)
        if limit is not None:
            checks[f"runtime {seconds:.1f}s < {limit}s"] = seconds < limit
        failed = [k for k, ok in checks.items() if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"CRITERION {number}: {status}"
        if failed:
            line += " (" + "; ".join(failed) + ")"
        lines.append((number, line))
        print(line)
        return failed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
