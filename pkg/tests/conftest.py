import os
import sys

import pytest

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (title, outcome, measured values)
_ACCEPTANCE: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if report.when == "call" or report.failed or report.skipped:
        measured = dict(item.user_properties).get("measured", "")
        number, title = marker.args
        _ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL", measured)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, verdict, measured = _ACCEPTANCE[number]
        line = f"{verdict} criterion {number:2d}: {title}"
        terminalreporter.write_line(f"{line} [{measured}]" if measured else line)
