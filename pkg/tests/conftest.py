"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

_OUTCOMES: dict[int, tuple[str, str]] = {}
_RANK = ["SKIP", "PASS", "FAIL"]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        # Several tests can share a criterion: any failure wins, and a skipped
        # optional check does not hide a pass.
        previous = _OUTCOMES.get(number, ("SKIP", title))[0]
        _OUTCOMES[number] = (max(previous, status, key=_RANK.index), title)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        status, title = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
