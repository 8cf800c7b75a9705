import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wave2d.grid import BandWindow, Grid2D, GridFunction, dstar_project, pi_lambda, rotate90
from wave2d.operators import apply_G0
from wave2d.potentials import Potential, factor_potential, gaussian
from wave2d.waveop import (DomainError, TruncationError, born_high_term, build_quadrature,
                           k_operator, pi_on_active, split_good_bad, w_minus, w_stationary,
                           w_time_dependent)

G64 = Grid2D(64, 16.0)


def _packet(g, window, center=(1.0, 0.0), width=2.0):
    X1, X2 = g.mesh()
    f = np.exp(-((X1 - center[0]) ** 2 + (X2 - center[1]) ** 2) / width**2)
    return dstar_project(GridFunction(g, f.astype(complex)), window)


WIN = BandWindow(0.4, 1.6)
U64 = _packet(G64, WIN)


def test_quadrature_bands():
    q = build_quadrature(WIN, 0.5, grid=G64)
    assert q.low_nodes.min() == pytest.approx(0.4) and q.low_nodes.max() == pytest.approx(1.0)
    assert q.high_nodes.min() == pytest.approx(0.5) and q.high_nodes.max() == pytest.approx(1.6)
    with pytest.raises(ValueError):
        build_quadrature(WIN, 0.0, grid=G64)
    with pytest.raises(ValueError):
        build_quadrature(WIN, 0.5)


def test_free_case_is_identity():
    V = Potential(G64, np.zeros((64, 64)), allow_zero=True)
    q = build_quadrature(WIN, 0.5, grid=G64)
    assert np.array_equal(w_stationary(V, U64, q).W.values, U64.values)
    g = Grid2D(128, 32.0)
    u = _packet(g, WIN)
    td = w_time_dependent(Potential(g, np.zeros((128, 128)), allow_zero=True), u, [1.0, 2.0])
    for out in td.outputs:
        assert (out - u).norm() < 1e-12 * u.norm()


def test_pi_on_active_matches_full_grid():
    fp = factor_potential(gaussian(G64, 0.3, 1.0))
    for lam in (0.45, 1.2):
        P, _ = pi_on_active(U64, lam, fp)
        np.testing.assert_allclose(P, fp.gather(pi_lambda(U64, lam)), atol=1e-12)


def test_born_zero_term_against_full_grid_route():
    V = gaussian(G64, 0.3, 1.0)
    q = build_quadrature(WIN, 0.25, grid=G64)
    lams, wts = q.combined(("high",))
    ref = np.zeros((64, 64), complex)
    for lam, wt in zip(lams, wts):
        if wt:
            src = GridFunction(G64, V.V * pi_lambda(U64, lam).values)
            ref += wt * apply_G0(lam, "incoming", src).values
    got = born_high_term(V, U64, 0, 0.25, q)
    assert np.linalg.norm(got.values - ref) < 1e-8 * np.linalg.norm(ref)


@pytest.mark.parametrize("j", [0, 1, 2])
def test_born_terms_are_homogeneous(j):
    q = build_quadrature(WIN, 0.25, grid=G64)
    V = gaussian(G64, 0.2, 1.0)
    t1 = born_high_term(V, U64, j, 0.25, q).norm()
    t2 = born_high_term(V.scaled(0.5), U64, j, 0.25, q).norm()
    assert np.log2(t1 / t2) == pytest.approx(j + 1, abs=1e-8)


def test_born_series_sums_to_high_part():
    V = gaussian(G64, 0.1, 1.0)
    q = build_quadrature(WIN, 0.25, grid=G64)
    scat = w_stationary(V, U64, q, bands=("high",)).scattered[0]
    born = sum(born_high_term(V, U64, j, 0.25, q).values for j in range(5))
    assert np.linalg.norm(born - scat.values) < 1e-4 * scat.norm()
    with pytest.raises(ValueError):
        born_high_term(V, U64, 5, 0.25, q)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-3, 3), st.floats(-3, 3))
def test_good_plus_bad_identity(lam, z1, z2):
    sp = split_good_bad(U64, lam)
    z = [[z1, z2]]
    l1 = np.abs(U64.values).sum() * U64.cell
    gap = sp.good(z) + sp.bad(z) - sp.difference(z)
    assert np.abs(gap).max() < 1e-8 * l1


@pytest.fixture(scope="module")
def wide():
    # dual spacing 2pi/256 resolves the plateau of a band starting at 0.01
    g = Grid2D(256, 256.0)
    X1, X2 = g.mesh()
    gauss = np.exp(-(X1**2 + X2**2) / 4)
    win = BandWindow(0.01, 1.5)
    return (dstar_project(GridFunction(g, gauss.astype(complex)), win),
            dstar_project(GridFunction(g, (X1 * gauss).astype(complex)), win))


def test_good_part_scales_like_lam_squared(wide):
    u, _ = wide
    lams = np.geomspace(0.05, 0.2, 7)
    vals = [abs(split_good_bad(u, l).good([[0.7, -0.4]])[0]) for l in lams]
    assert np.polyfit(np.log(lams), np.log(vals), 1)[0] == pytest.approx(2.0, abs=0.1)


def test_bad_part_is_a_dipole(wide):
    u, v = wide
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    basis = np.stack([np.cos(th), np.sin(th)], 1)
    bv = split_good_bad(v, 0.9).bad(basis)
    coef, *_ = np.linalg.lstsq(basis.astype(complex), bv, rcond=None)
    assert np.abs(basis @ coef - bv).max() < 1e-12 * np.abs(bv).max()
    assert abs(coef[1]) < 1e-10 * abs(coef[0])  # x1-odd input points along x1
    # radial input: only the unpaired -L/2 edge samples break the symmetry
    bu = split_good_bad(u, 0.9).bad(basis)
    assert np.abs(bu).max() < 1e-4 * np.abs(bv).max()


@pytest.fixture(scope="module")
def reg128():
    g = Grid2D(128, 32.0)
    return g, gaussian(g, 0.3, 1.0), _packet(g, BandWindow(0.2, 1.0))


def test_isometry_and_quadrature_refinement(reg128):
    g, V, u = reg128
    win = BandWindow(0.2, 1.0)
    q = build_quadrature(win, 0.5, grid=g)
    W = w_stationary(V, u, q).W
    assert W.norm() / u.norm() == pytest.approx(1.0, abs=0.05)
    step = q.high_nodes[1] - q.high_nodes[0]
    W2 = w_stationary(V, u, build_quadrature(win, 0.5, spacing=step / 2, grid=g)).W
    assert (W - W2).norm() / W.norm() < 0.01


def test_expansion_mode_first_kind(V0, crossings):
    V = V0.scaled(crossings["FirstKind"])
    u = _packet(V.grid, BandWindow(0.1, 1.0))
    q = build_quadrature(BandWindow(0.1, 1.0), 0.25, grid=V.grid)
    fp = factor_potential(V)
    d = w_stationary(V, u, q, bands=("low",), fp=fp).W
    e = w_stationary(V, u, q, bands=("low",), fp=fp, inverse_mode="Expansion").W
    assert (d - e).norm() / d.norm() < 0.02
    with pytest.raises(ValueError):
        w_stationary(V, u, q, inverse_mode="Neumann")


def test_rotation_covariance_for_radial_potential():
    V = gaussian(G64, 0.3, 1.0)
    q = build_quadrature(WIN, 0.5, grid=G64)
    W = w_stationary(V, U64, q).W
    Wr = w_stationary(V, U64.with_values(rotate90(U64.values)), q).W
    # exact up to the unpaired -L/2 edge samples of the band-limited input
    assert np.linalg.norm(Wr.values - rotate90(W.values)) < 1e-3 * W.norm()


def test_w_minus_is_conjugated_w_plus():
    V = gaussian(G64, 0.3, 1.0)
    q = build_quadrature(WIN, 0.5, grid=G64)
    Wm = w_minus(V, U64, q)
    assert Wm.norm() / U64.norm() == pytest.approx(1.0, abs=0.05)
    Wp = w_stationary(V, U64.conj(), q).W
    np.testing.assert_array_equal(Wm.values, np.conj(Wp.values))


def test_time_dependent_truncation_guard():
    V = gaussian(G64, 0.3, 1.0)
    with pytest.raises(TruncationError):
        w_time_dependent(V, U64, [40.0])


def test_k_operator_checks():
    g = Grid2D(64, 20.0)
    u = _packet(g, BandWindow(1.0, 4.0), center=(0.0, 0.0), width=0.7)
    with pytest.raises(ValueError):
        k_operator(u, "Spline")
    K1 = k_operator(u, "LambdaQuadrature", window=BandWindow(1.0, 4.0))
    K2 = k_operator(2.0 * u, "LambdaQuadrature", window=BandWindow(1.0, 4.0))
    np.testing.assert_allclose(K2.values, 2.0 * K1.values, atol=1e-12)
    with pytest.raises(DomainError):
        k_operator(u, "LambdaQuadrature", window=BandWindow(1.0, 50.0))
