from __future__ import annotations

import pytest

_criteria: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            verdict = "SKIP"
        else:
            verdict = "PASS" if rep.passed else "FAIL"
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _criteria.append((verdict, marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, name, detail in sorted(_criteria, key=lambda c: c[1]):
        line = f"{verdict} {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
