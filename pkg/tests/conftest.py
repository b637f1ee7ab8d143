import re
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dfee.densities import DensityModel
from dfee.lattice import BoxGeometry, build_hamiltonian, constant_potential, sample_potential

settings.register_profile(
    "dfee", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("dfee")


@pytest.fixture
def exp1():
    return DensityModel.exponential(1.0)


@pytest.fixture
def random_h1d(exp1):
    """A 1-D disordered Hamiltonian on [-40, 40]."""
    geo = BoxGeometry(1, 40)
    return build_hamiltonian(sample_potential(exp1, geo, 11, 3))


@pytest.fixture
def clean_h1d():
    def make(N):
        return build_hamiltonian(constant_potential(BoxGeometry(1, N)))
    return make


def random_symmetric(n, seed=0):
    a = np.random.default_rng(seed).standard_normal((n, n))
    return a + a.T


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    def order(line):
        num, suffix = re.match(r"criterion (\d+)(\w*)", line).groups()
        return int(num), suffix

    for line in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(line)
