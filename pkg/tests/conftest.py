import numpy as np
import pytest

from synthgauge import _accel


@pytest.fixture(params=["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"])
def backend(request):
    previous = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
