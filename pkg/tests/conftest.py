import pytest

_ACCEPTANCE = []


@pytest.fixture
def record():
    """Log one acceptance line; the lines are repeated in the terminal summary."""
    def _record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
