import numpy as np
import pytest

from nildual.nil3 import DomainGrid


@pytest.fixture(scope="session")
def grid41():
    return DomainGrid(-1.0, 1.0, -1.0, 1.0, 41, 41)


@pytest.fixture(scope="session")
def grid_small():
    return DomainGrid(-0.5, 0.5, -0.5, 0.5, 21, 21)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
