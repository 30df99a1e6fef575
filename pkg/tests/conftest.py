"""Shared pytest hooks.

Tests marked ``acceptance(number, title)`` are collected into a summary that
prints one PASS/FAIL line per criterion at the end of the run.  A test can
attach measured numbers with the ``report`` fixture; they appear next to the
verdict.
"""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.fixture
def report(request):
    notes = []
    request.node.user_properties.append(("notes", notes))
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "notes": []})
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False
    if rep.when == "call":
        for key, value in item.user_properties:
            if key == "notes":
                entry["notes"].extend(value)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        verdict = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {number:2d}: {entry['title']}")
        for note in entry["notes"]:
            terminalreporter.write_line(f"           {note}")
