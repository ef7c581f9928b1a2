"""Shared fixtures: the acceptance tests record one line per criterion
and the terminal summary replays them so the verdicts are visible in the
normal pytest output."""

import pytest

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion_report():
    def record(line: str) -> None:
        _criterion_lines.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
