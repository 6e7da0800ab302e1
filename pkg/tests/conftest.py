import logging

import numpy as np
import pytest

from core.worker_pool import shutdown_pool
from models.noise import NoiseSource
from services.lattice_service import make_dirichlet, make_torus
from services.potential_service import kinked, quadratic, soft_quartic


@pytest.fixture
def src():
    return NoiseSource(seed=20240101)


@pytest.fixture
def gaussian():
    return quadratic()


@pytest.fixture
def quartic():
    return soft_quartic(0.5)


@pytest.fixture
def kink():
    return kinked(0.5)


@pytest.fixture
def torus():
    return make_torus(2, 3)


@pytest.fixture
def domain():
    return make_dirichlet(2, 10)


@pytest.fixture
def rng():
    # только для построения тестовых входов; динамика всегда берёт шум из NoiseSource
    return np.random.default_rng(7)


@pytest.fixture(autouse=True)
def _reset_pool():
    yield
    shutdown_pool()


@pytest.fixture(autouse=True)
def _quiet_violations():
    # без setup_logging нарушения не должны попадать в вывод pytest
    violations = logging.getLogger("violations")
    previous = violations.propagate
    violations.propagate = False
    yield
    violations.propagate = previous
