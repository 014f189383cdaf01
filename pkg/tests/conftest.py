import numpy as np
import pytest

from lanechange import (
    ControllerGains,
    InputLimits,
    LaneLayout,
    VehicleGeometry,
)


@pytest.fixture(scope="session")
def geo():
    return VehicleGeometry()


@pytest.fixture(scope="session")
def limits():
    return InputLimits()


@pytest.fixture()
def gains():
    return ControllerGains(v_d=27.5, v_l=33.33)


@pytest.fixture(scope="session")
def lanes3():
    return LaneLayout(width=3.5, centers=np.array([1.75, 5.25, 8.75]))
