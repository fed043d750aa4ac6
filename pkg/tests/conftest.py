import numpy as np
import pytest


def random_hermitian(d, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + a.conj().T) / 2


def random_full_rank(d, rng):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    r = g @ g.conj().T
    return r / np.trace(r).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def flipped_pair():
    rho = np.diag([0.025, 0.975]).astype(complex)
    sigma = np.diag([0.975, 0.025]).astype(complex)
    return rho, sigma
