import math

import numpy as np
import pytest

from mcsle.lattice import build_circle_domain

N = math.pi / 2
S = -math.pi / 2


@pytest.fixture(scope="session")
def disk16():
    return build_circle_domain(1.0, [], 1 / 16, (N, S))


@pytest.fixture(scope="session")
def disk32():
    return build_circle_domain(1.0, [], 1 / 32, (N, S))


@pytest.fixture(scope="session")
def annulus24():
    return build_circle_domain(1.0, [((0.0, 0.0), 0.3679)], 1 / 24, (N, S))


@pytest.fixture(scope="session")
def annulus32():
    return build_circle_domain(1.0, [((0.0, 0.0), 0.3679)], 1 / 32, (N, S))


@pytest.fixture(scope="session")
def twoholes():
    return build_circle_domain(1.0, [((0.0, 0.45), 0.15), ((0.0, -0.45), 0.15)],
                               1 / 32, (0.0, math.pi))


@pytest.fixture(scope="session")
def small_disk():
    return build_circle_domain(0.5, [], 1 / 16, (N, S))
