import re

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Collects one verdict line per acceptance criterion for the terminal summary."""

    def add(number, name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number} ({name}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return add


def _order(line):
    num, sub = re.search(r"criterion (\d+)(\w*)", line).groups()
    return int(num), sub


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_order):
            terminalreporter.write_line(line)
