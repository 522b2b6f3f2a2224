from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ra_lab", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ra_lab")

# one summary line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    """Record the outcome of one acceptance criterion.

    ``checks`` maps a short claim name to whether it held; the criterion
    passes only when every claim does. ``detail`` carries the measured values.
    """

    def record(criterion: int, title: str, checks: dict[str, bool], detail: str) -> None:
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL (" + "; ".join(failed) + ")"
        line = f"criterion {criterion} {title}: {status} | {detail}"
        ACCEPTANCE_LINES[criterion] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
