import numpy as np
import pytest

from heightspin.graph import build_square_lattice, dual


@pytest.fixture(scope="session")
def box1():
    return build_square_lattice(1)


@pytest.fixture(scope="session")
def box2():
    return build_square_lattice(2)


@pytest.fixture(scope="session")
def dual1(box1):
    return dual(box1)


@pytest.fixture(scope="session")
def dual2(box2):
    return dual(box2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
