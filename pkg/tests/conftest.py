"""Terminal-summary plumbing for the acceptance suite.

test_acceptance records one entry per promised criterion through the
`acceptance` fixture; pytest_terminal_summary prints them as a single
PASS/FAIL line each, visible regardless of capture settings.
"""

import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def acceptance(request):
    """Record a criterion outcome.  Several tests may share one criterion
    name; the printed line ANDs their verdicts and joins the details."""
    lines = request.config._acceptance_lines

    def record(name, ok, detail):
        prev_ok, prev_details = lines.get(name, (True, []))
        lines[name] = (prev_ok and bool(ok), prev_details + [detail])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, details) in lines.items():
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}: {'; '.join(details)}")
