import numpy as np
import pytest

import netconn as nc


def make_path(n: int) -> nc.Topology:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return nc.Topology(adjacency=a)


def make_complete(n: int) -> nc.Topology:
    return nc.Topology(adjacency=np.ones((n, n)) - np.eye(n))


def make_star(n: int) -> nc.Topology:
    a = np.zeros((n, n))
    a[0, 1:] = 1.0
    a[1:, 0] = 1.0
    return nc.Topology(adjacency=a)


def rgg_from_seed(seed: int, n: int, side: float, p_tx: float = 4.0) -> nc.Topology:
    gen = np.random.default_rng(seed)
    pos = gen.uniform(0, side, (n, 2))
    radio = nc.RadioParams(p_tx=p_tx, p_th=0.01, xi=2.0, rho=n / side ** 2)
    return nc.build_rgg(pos, radio)


@pytest.fixture(scope="session")
def p3():
    return make_path(3)


@pytest.fixture(scope="session")
def k4():
    return make_complete(4)


@pytest.fixture(scope="session")
def rgg20():
    """20-node connected geometric graph used across the estimator tests
    (lambda2 ~ 0.57, lambda3 - lambda2 ~ 0.66)."""
    return rgg_from_seed(33, 20, 60.0)


@pytest.fixture(scope="session")
def rgg10():
    """Well-conditioned 10-node geometric graph (lambda2 ~ 2.7)."""
    gen = np.random.default_rng(186)
    pos = gen.uniform(0, 30, (10, 2))
    radio = nc.RadioParams(p_tx=2.25, p_th=0.01, xi=2.0, rho=10 / 900)
    return nc.build_rgg(pos, radio)
