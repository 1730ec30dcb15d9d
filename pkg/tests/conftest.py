import numpy as np
import pytest

from secondorder.rng import RngStream


@pytest.fixture
def stream():
    return RngStream(seed=1234, stream_id=7)


@pytest.fixture
def gen():
    return np.random.default_rng(98765)


def mean_and_stderr(x):
    x = np.asarray(x)
    return x.mean(), x.std(ddof=1) / np.sqrt(x.size)
