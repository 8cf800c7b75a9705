import numpy as np
import pytest

from wave2d.grid import Grid2D
from wave2d.potentials import factor_potential, gaussian
from wave2d.threshold import crossing_oracle

# crossing couplings of the unit Gaussian on Grid2D(128, 32), frozen from the
# eigenvalue oracle (g* = 1/mu over positive eigenvalues of v0 N0 v0 on v-perp)
FROZEN_CROSSINGS = {"SecondKind": 6.89477663, "FirstKind": 11.61064549, "ThirdKind": 19.70022263}


@pytest.fixture(scope="session")
def grid128():
    return Grid2D(128, 32.0)


@pytest.fixture(scope="session")
def V0(grid128):
    return gaussian(grid128, 1.0, 1.0)


@pytest.fixture(scope="session")
def crossings(V0):
    cr = crossing_oracle(V0)
    return {"SecondKind": cr[0], "FirstKind": cr[2], "ThirdKind": cr[3]}


@pytest.fixture(scope="session")
def tuned(V0, crossings):
    """Factored potentials at the tuned couplings, keyed by kind."""
    return {k: factor_potential(V0.scaled(g)) for k, g in crossings.items()}


@pytest.fixture(scope="session")
def small_fp():
    return factor_potential(gaussian(Grid2D(64, 16.0), 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
