import pytest

from llmorderby import ResponseCache, SimulatedOracle, UsageMeter

from .helpers import ASC


@pytest.fixture
def asc():
    return ASC


@pytest.fixture
def oracle():
    return SimulatedOracle(cache=ResponseCache())


@pytest.fixture
def meter():
    return UsageMeter()


_acceptance: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, label = mark.args
    ok = report.passed
    prev = _acceptance.get(number, (label, True))
    _acceptance[number] = (label, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        label, ok = _acceptance[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] #{number} {label}")
