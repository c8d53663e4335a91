"""Shared pytest wiring: the acceptance scorecard summary.

Acceptance tests register one line each via ``record_score``; the hook
below echoes the scorecard after the run so the PASS/FAIL lines are
visible even when output capture is on.
"""

_SCORECARD = []


def record_score(line):
    _SCORECARD.append(line)


def pytest_terminal_summary(terminalreporter):
    if _SCORECARD:
        terminalreporter.section("acceptance scorecard")
        for line in _SCORECARD:
            terminalreporter.write_line(line)
