import math

import pytest

from nonlocal_blowup.params import ModelParameters, derive_constants


@pytest.fixture(scope="session")
def classical():
    params = ModelParameters(p=3.0, r=1.0, gamma=0.0, N=1)
    return params, derive_constants(params)


@pytest.fixture(scope="session")
def critical():
    params = ModelParameters.critical_regime(3.0, 1, 0.02)
    return params, derive_constants(params)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture
def log_T():
    return 100.0, math.exp(-100.0)
