import numpy as np
import pytest

from mimosync import model as m


@pytest.fixture
def small_cfg():
    # N >= N_T (L_m + 2 theta_max), so the symmetric padding window also fits
    return m.SystemConfig(n_subcarriers=16, n_tx=2, n_rx=2, max_taps=3, theta_max=2, cp_len=6)


@pytest.fixture
def siso_cfg():
    return m.SystemConfig(n_subcarriers=16, n_tx=1, n_rx=1, max_taps=3, theta_max=2, cp_len=6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
