import os

import pytest

# "full" (default) runs the final tests at 500000 iterations per side;
# "fast" uses 100000 and relaxes the strict p-value thresholds to 1e-2.
PROFILE = os.environ.get("DPDETECT_PROFILE", "full")

_verdicts = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    label = item.get_closest_marker("criterion")
    if label is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        _verdicts.append((label.args[0], label.args[1], rep.outcome))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section(f"acceptance criteria ({PROFILE} profile)")
    for number, title, outcome in sorted(_verdicts):
        word = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        terminalreporter.write_line(f"{word}  criterion {number:>2}: {title}")
