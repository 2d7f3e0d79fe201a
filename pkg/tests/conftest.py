"""Collects acceptance results and prints one verdict line per criterion."""

from __future__ import annotations

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            number, title = marker.args
            item.user_properties.append(("criterion", (number, title)))


def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key != "criterion":
            continue
        number, title = value
        entry = _results.setdefault(number, {"title": title, "outcomes": []})
        if report.when == "call" or report.outcome != "passed":
            entry["outcomes"].append((report.outcome, report.longrepr if report.skipped else None))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        outcomes = [o for o, _ in entry["outcomes"]]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        elif outcomes:
            verdict = "PASS"
        else:
            verdict = "NOT RUN"
        line = f"[{verdict}] criterion {number}: {entry['title']}"
        if verdict == "SKIP":
            reason = entry["outcomes"][0][1]
            if isinstance(reason, tuple):
                line += f" ({reason[2].removeprefix('Skipped: ')})"
        terminalreporter.write_line(line)
