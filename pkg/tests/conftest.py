import numpy as np
import pytest


def central_diff(f, x, eps=1e-6):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f(x)
        flat[i] = old - eps
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def random_soft(rng, d):
    g = rng.random((d, d))
    np.fill_diagonal(g, 0.0)
    return g


def mec4_graphs():
    """The generating DAG and its two Markov-equivalent alternatives."""
    g0 = np.zeros((4, 4), dtype=np.int8)
    g0[0, 1] = g0[0, 2] = g0[1, 3] = g0[2, 3] = 1
    g1 = g0.copy()
    g1[0, 1], g1[1, 0] = 0, 1
    g2 = g0.copy()
    g2[0, 2], g2[2, 0] = 0, 1
    return g0, g1, g2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
