import pytest

_ACCEPTANCE_LINES = []


class AcceptanceRecorder:
    """Collects the sub-checks of one criterion and prints a single verdict line."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))
        return ok

    def finish(self):
        failed = [c for c in self.checks if not c[1]]
        verdict = "PASS" if not failed else "FAIL"
        summary = "; ".join(f"{label} {detail}".strip() for label, _, detail in (failed or self.checks))
        line = f"[{verdict}] criterion {self.number} ({self.title}): {summary}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert not failed, line


@pytest.fixture
def acceptance():
    def make(number, title):
        return AcceptanceRecorder(number, title)
    return make


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
