from collections import defaultdict

import numpy as np
import pytest

from kccjacobi import catalog

_acceptance = defaultdict(list)  # number -> [(title, test id, outcome)]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        _acceptance[number].append((title, item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        entries = _acceptance[number]
        title = entries[0][0]
        failed = [name for _, name, outcome in entries if outcome != "passed"]
        status = "FAIL" if failed else "PASS"
        line = f"[{status}] criterion {number:>2}: {title}"
        if failed:
            line += "  (failing: " + ", ".join(failed) + ")"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def models():
    return catalog.all_models()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
