"""Acceptance bookkeeping: tests marked ``acceptance(number, title)`` get a PASS/FAIL summary line."""
import time
from contextlib import contextmanager

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.fixture
def budget(request):
    """``with budget(seconds): ...`` fails the test if the block overruns."""

    @contextmanager
    def run(limit: float):
        start = time.perf_counter()
        yield
        elapsed = time.perf_counter() - start
        request.node.user_properties.append(("elapsed", (elapsed, limit)))
        assert elapsed < limit, f"took {elapsed:.2f} s, limit {limit} s"

    return run


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (report.when == "call" or report.failed):
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "timing": ""})
    entry["ok"] = entry["ok"] and report.passed
    for key, val in item.user_properties:
        if key == "elapsed":
            entry["timing"] = f" [{val[0]:.2f} s of {val[1]:g} s]"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        e = _RESULTS[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number:2d}: {e['title']}{e['timing']}")
