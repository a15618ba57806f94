import numpy as np
import pytest

from kreinvn.cli import get_model
from kreinvn.extensions import Friedrichs, Krein, Param, build_extension
from kreinvn.kreinformula import _extensions


@pytest.fixture(scope="session")
def interval():
    """Interval Laplacian at the reference resolution n = 2048."""
    return get_model("interval", 2048)


@pytest.fixture(scope="session")
def interval_small():
    return get_model("interval", 512)


@pytest.fixture(scope="session")
def halfline():
    return get_model("halfline", 2048)


@pytest.fixture(scope="session")
def fk(interval):
    """Friedrichs and Krein-von Neumann realizations on the reference interval."""
    return _extensions(interval)


@pytest.fixture(scope="session")
def fk_small(interval_small):
    return _extensions(interval_small)


@pytest.fixture(scope="session")
def param_identity(interval):
    return build_extension(interval, Param(np.eye(2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    rep = outcome.get_result()
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} criterion {number:2d}: {title} ({secs:.1f} s)")
