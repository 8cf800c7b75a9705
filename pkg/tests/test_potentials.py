import numpy as np
import pytest

from wave2d.grid import Grid2D
from wave2d.potentials import (Potential, ell1_dipole, factor_potential, full_factors, gaussian,
                               ring, tabulated)

G = Grid2D(64, 16.0)


def test_factorization_identity():
    V = ell1_dipole(G, 2.0)
    fp = factor_potential(V)
    np.testing.assert_allclose(fp.v * fp.w, fp.gather(V.V))
    U, v, w = full_factors(V)
    np.testing.assert_allclose(v * w, V.V)
    assert set(np.unique(fp.U)) <= {-1.0, 1.0}


def test_profiles():
    X1, X2 = G.mesh()
    np.testing.assert_allclose(gaussian(G, 2.0, 1.5).V, -2.0 * np.exp(-(X1**2 + X2**2) / 2.25))
    assert ring(G, 1.0).V.min() < 0
    d = ell1_dipole(G, 1.0).V
    np.testing.assert_allclose(d[1:, :][::-1, :], -d[1:, :], atol=1e-15)


def test_potential_validation():
    with pytest.raises(ValueError):
        Potential(G, np.zeros((64, 64)))
    Potential(G, np.zeros((64, 64)), allow_zero=True)
    with pytest.raises(ValueError):
        gaussian(G, 1.0, width=20.0)  # leaks to the boundary
    with pytest.raises(ValueError):
        tabulated(G, np.ones((64, 64)) * 1j)
    with pytest.raises(ValueError):
        factor_potential(Potential(G, np.zeros((64, 64)), allow_zero=True))


def test_scatter_gather_roundtrip():
    fp = factor_potential(gaussian(G, 1.0))
    x = np.arange(fp.size, dtype=float)
    assert np.array_equal(fp.gather(fp.scatter(x)), x)
    r0, r1, c0, c1 = fp.box()
    assert r1 - r0 == fp.spans[0] + 1
