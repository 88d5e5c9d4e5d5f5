import numpy as np
import pytest

from geom4d import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Pay numba JIT compilation once, outside any timed acceptance block.
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
