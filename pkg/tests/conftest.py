"""Shared fixtures: small discretizations reused across test modules."""

import numpy as np
import pytest

from fcrkpm import discretize, poisson_case


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def disc1d():
    return discretize(poisson_case(1), n=1, a_tilde=1.5, counts=64, release=False)


@pytest.fixture(scope="session")
def disc2d():
    return discretize(poisson_case(2), n=1, a_tilde=1.5, counts=16, release=False)


@pytest.fixture(scope="session")
def disc3d():
    return discretize(poisson_case(3), n=1, a_tilde=1.5, counts=8, release=False)


@pytest.fixture(scope="session")
def ref2d(disc2d):
    return disc2d.reference()


def rel_err(a, b):
    scale = np.max(np.abs(b))
    return np.max(np.abs(a - b)) / (scale if scale > 0 else 1.0)
