import numpy as np
import pytest

from gridfnapp.asymptotics import make_ladder
from gridfnapp.grid_core import make_level


@pytest.fixture(autouse=True)
def _worker_cap(monkeypatch):
    monkeypatch.setenv("GRIDFN_THREADS", "2")


@pytest.fixture
def ladder():
    """N = 720, 1440, 2880 on [-1, 1]."""
    return make_ladder(3)


@pytest.fixture
def small_ladder():
    return make_ladder(3, base=64)


@pytest.fixture
def level8():
    return make_level(0, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
