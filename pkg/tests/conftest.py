import numpy as np
import pytest

from qhalfline.grid import make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def whole_small():
    return make_grid("whole-line", 20.0, 256)


@pytest.fixture
def half_small():
    return make_grid("half-line", 20.0, 256)
