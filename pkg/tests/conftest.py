import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from quasiabp.fields import Hamiltonian, psi_family  # noqa: E402
from quasiabp.grid import Grid  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def unit_psi():
    return psi_family("constant-power", p_hat=0.0)


@pytest.fixture
def zero_ham():
    return Hamiltonian()


@pytest.fixture
def disc21():
    return Grid.ball((0.0, 0.0), 1.0, 21)
