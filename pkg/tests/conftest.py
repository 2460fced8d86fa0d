import pytest

from gradesim.cohort import PRESETS
from gradesim.rng import RngStream

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        number, title = marker
        ok = report.passed
        prev = _criteria.get(number)
        _criteria[number] = (title, ok if prev is None else prev[1] and ok)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def measure():
    return PRESETS["measure1-like"]


@pytest.fixture
def prevent():
    return PRESETS["prevent-like"]


@pytest.fixture
def stream():
    return RngStream(12345)
