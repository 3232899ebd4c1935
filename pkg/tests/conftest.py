import numpy as np
import pytest

from hmpc.systems import bouncing_ball, sample_hold, thermostat


@pytest.fixture(scope="session")
def ball():
    return bouncing_ball()


@pytest.fixture(scope="session")
def sh():
    return sample_hold()


@pytest.fixture(scope="session")
def thermo():
    return thermostat()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
