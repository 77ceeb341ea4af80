import numpy as np
import pytest

from switchpred import harness


@pytest.fixture(scope="session")
def spec3():
    return harness.three_mode_plant()


@pytest.fixture(scope="session")
def dwell3():
    return harness.three_mode_dwell()


@pytest.fixture(scope="session")
def design3():
    return harness.three_mode_design()


@pytest.fixture(scope="session")
def x0_bench():
    return np.array([1.0, -1.0])
