import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eplab import Grid

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def grid64():
    return Grid(64)


@pytest.fixture
def grid128():
    return Grid(128)


def two_pi():
    return 2.0 * np.pi
