"""Collect acceptance verdicts and print them once at the end of the session."""

VERDICTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str = "", soft: bool = False) -> None:
    status = "PASS" if ok else ("WARN" if soft else "FAIL")
    line = f"criterion {number:2d} {status}: {title}"
    if detail:
        line += f" ({detail})"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
