import os

import pytest
from hypothesis import HealthCheck, settings

from infofilter.dp_solver import CategoryModel

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def news_model():
    """Single category with prior mean 0.05, long lifetime and cost at the prior mean."""
    return CategoryModel(1.0, 19.0, 0.999, 0.05)


# --- acceptance reporting ---------------------------------------------------------------

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion checked by the test")
    config.stash[_VERDICTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and report.passed:
        return
    number = marker.args[0]
    details = [v for key, v in item.user_properties if key == "detail"]
    item.config.stash[_VERDICTS][number] = ("PASS" if report.passed else "FAIL", details)


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash[_VERDICTS]
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        status, details = verdicts[number]
        terminalreporter.write_line(f"criterion {number}: {status}")
        for d in details:
            terminalreporter.write_line(f"    {d}")


@pytest.fixture
def detail(record_property):
    """Record one diagnostic line under the test's acceptance verdict."""
    return lambda text: record_property("detail", text)
