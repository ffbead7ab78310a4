import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Append a PASS/FAIL line for an acceptance criterion; printed in the terminal summary."""

    def _record(number: int, passed: bool, detail: str, flagged: bool = False) -> None:
        status = "PASS" if passed else ("FAIL (flagged)" if flagged else "FAIL")
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {status}: {detail}")
        print(ACCEPTANCE_LINES[-1])

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
