"""Prints one pass/fail line per acceptance criterion at the end of the session."""

import re

_CRITERIA: dict[int, dict] = {}
_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    entry = _CRITERIA.setdefault(n, {"name": m.group(2).replace("_", " "), "outcome": "passed", "detail": ""})
    if report.when == "call" or report.failed:
        if report.failed:
            entry["outcome"] = "failed"
        elif report.skipped and entry["outcome"] != "failed":
            entry["outcome"] = "skipped"
        for key, value in report.user_properties:
            if key == "detail":
                entry["detail"] = str(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[e["outcome"]]
        line = f"criterion {n} {status}: {e['name']}"
        if e["detail"]:
            line += f" ({e['detail']})"
        terminalreporter.write_line(line)
