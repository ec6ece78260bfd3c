import numpy as np
import pytest

from symsfm import kernels
from symsfm.synthetic import random_rotation


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the jit kernels once so timed tests measure algorithm cost
    kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_rotation(rng):
    return random_rotation(rng)


def orthonormal_2x3(rng):
    return random_rotation(rng)[:2]
