"""Collects the acceptance-criterion verdicts and prints them after the run."""

ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Store (and print) the verdict line for one acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} -- {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
