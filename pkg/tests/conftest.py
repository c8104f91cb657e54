import pytest

_acceptance_lines = []


@pytest.fixture
def verdict():
    """Record an acceptance-criterion verdict; lines print in the summary."""
    def _verdict(n, name, ok, evidence):
        line = f"[criterion {n}] {name}: {'PASS' if ok else 'FAIL'} ({evidence})"
        _acceptance_lines.append(line)
        print(line)
        assert ok, f"criterion {n} ({name}): {evidence}"

    return _verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
