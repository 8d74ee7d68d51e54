"""Shared pytest plumbing.

The acceptance gate (test_acceptance.py) reports one verdict line per
criterion.  Those lines are collected here and replayed in a terminal
section after the run, so they stay visible under default output capture.
"""

_verdict_lines: list[str] = []


def record_verdict(line: str) -> None:
    _verdict_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _verdict_lines:
        terminalreporter.section("acceptance gate")
        for line in _verdict_lines:
            terminalreporter.line(line)
