import numpy as np
import pytest

from occlufit import make_synthetic_basis


@pytest.fixture(scope="session")
def basis8():
    return make_synthetic_basis(8, 42)


@pytest.fixture(scope="session")
def basis64():
    return make_synthetic_basis(64, 7)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
