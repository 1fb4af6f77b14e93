import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scenariogen.presets import load_preset, preset_ids  # noqa: E402


@pytest.fixture(scope="session")
def presets():
    return {pid: load_preset(pid) for pid in preset_ids()}


# --- acceptance report ----------------------------------------------------------------

_criteria: dict = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, [title, True, ""])
    if report.failed or (report.when == "call" and report.outcome == "skipped"):
        entry[1] = False
        if hasattr(report, "wasxfail"):
            entry[2] = f" (expected failure: {report.wasxfail})"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, note = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}{note}")
