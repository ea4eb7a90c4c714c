import sys

import numpy as np
import pytest

from rsd.inversion import default_config
from rsd.states import QState, werner


def random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def random_hermitian(rng, n):
    m = random_matrix(rng, n)
    return (m + m.conj().T) / 2


def random_two_qubit(seed) -> QState:
    rng = np.random.default_rng(seed)
    g = random_matrix(rng, 4)
    rho = g @ g.conj().T
    return QState(rho / np.trace(rho), (2, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cfg2():
    return default_config(d=2, g=0.01)


@pytest.fixture
def w08():
    return werner(0.8)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(mod.RESULTS):
        terminalreporter.write_line(mod._line(i))
