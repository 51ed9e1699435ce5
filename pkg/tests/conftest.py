import math

import numpy as np
import pytest

import spdelab as sl

L = math.pi


@pytest.fixture(scope="session")
def dirichlet():
    return sl.DomainSpec(length=L, boundary="dirichlet")


@pytest.fixture(scope="session")
def neumann():
    return sl.DomainSpec(length=L, boundary="neumann")


@pytest.fixture(scope="session")
def u0_bump():
    return sl.bump(L)


@pytest.fixture(scope="session")
def u0_one():
    return sl.constant(L, 1.0)


def simpson_weights(n, length):
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * length / (3.0 * n)
