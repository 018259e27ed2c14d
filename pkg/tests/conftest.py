import numpy as np
import pytest

from specreg.grid import make_grid


@pytest.fixture
def grid100():
    return make_grid(100)


@pytest.fixture
def grid256():
    return make_grid(256)


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.Philox(key=20240))
