"""Shared pytest plumbing: collects acceptance-criterion outcomes and prints
one line per criterion in the terminal summary."""

CRITERION_RESULTS = {}


def record_criterion(number: int, description: str, passed: bool, detail: str = ""):
    CRITERION_RESULTS[number] = (description, passed, detail)
    status = "PASS" if passed else "FAIL"
    print(f"[criterion {number:02d}] {status}: {description}" + (f" ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERION_RESULTS):
        description, passed, detail = CRITERION_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:02d} {status}  {description}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
