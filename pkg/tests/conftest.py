import numpy as np
import pytest

from acflow import build_spaces


@pytest.fixture(scope="session")
def spaces2():
    return build_spaces(2)


@pytest.fixture(scope="session")
def spaces3():
    return build_spaces(3)


@pytest.fixture(scope="session")
def spaces4():
    return build_spaces(4)


@pytest.fixture(scope="session")
def spaces8():
    return build_spaces(8)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240517)
