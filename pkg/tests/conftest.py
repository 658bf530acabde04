import sys

import numpy as np
import pytest
from hypothesis import settings

from oirssim.channel import Led, OirsElement, Pd
from oirssim.scenario import Scenario

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

L_REF = np.array([2.0, 2.0, 3.0])
R_REF = np.array([2.0, 0.0, 1.5])
U_REF = np.array([2.0, 2.0, 0.0])


@pytest.fixture(scope="session")
def scenario():
    return Scenario.preset("paper-siso")


@pytest.fixture
def led():
    return Led(L_REF)


@pytest.fixture
def pd():
    return Pd(U_REF)


@pytest.fixture
def element():
    return OirsElement(R_REF, 0.0, 0.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
