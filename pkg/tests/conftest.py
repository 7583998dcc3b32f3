import numpy as np
import pytest

from fedleak.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_tensor(rng, shape, scale=1.0):
    return Tensor.from_array(rng.uniform(-scale, scale, size=shape))
