import numpy as np
import pytest

from apacnet import networks
from apacnet.environments import SmoothedNormTerminal


def central_diff(f, x, h=1e-4):
    """Central finite difference of a scalar function of a scalar."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def rel_err(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.max(np.abs(a - b) / (np.maximum(np.abs(a), np.abs(b)) + floor))


@pytest.fixture
def planar_terminal():
    return SmoothedNormTerminal((0, 1), (2.0, 2.0), 1e-3)


@pytest.fixture
def small_value_net():
    cfg = networks.value_net_config(2, width=16, hidden_layers=3)
    return cfg, networks.init_params(cfg, 11, networks.ROLE_VALUE)
