import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from wave2d import specfun
from wave2d.grid import Grid2D, GridFunction
from wave2d.operators import (apply_G0, apply_static, build_M, build_M0, build_M1, build_static,
                              build_vG0w_deriv, dump_operator, g1, hs_norm, hs_norm_vG0w,
                              kernel_matrix, load_operator, offset_table)
from wave2d.potentials import factor_potential, gaussian, ring

TINY = factor_potential(gaussian(Grid2D(32, 6.0), 1.0, 1.0))


def _brute_kernel(fp, lam):
    X = fp.coords
    r = np.hypot(X[:, None, 0] - X[None, :, 0], X[:, None, 1] - X[None, :, 1])
    K = np.empty(r.shape, dtype=complex)
    off = r > 0
    K[off] = specfun.resolvent_kernel(lam, r[off])
    K[~off] = specfun.diagonal_value("G0", fp.grid.h, lam)
    return K * fp.weight


def test_M_against_pairwise_oracle():
    lam = 0.8
    M = build_M(lam, TINY).matrix
    ref = np.diag(TINY.U) + TINY.v[:, None] * _brute_kernel(TINY, lam) * TINY.v[None, :]
    np.testing.assert_allclose(M, ref, rtol=1e-13, atol=1e-15)


def test_M_symmetry_and_branches():
    M = build_M(1.2, TINY).matrix
    np.testing.assert_allclose(M, M.T, rtol=0, atol=1e-16)
    np.testing.assert_allclose(build_M(1.2, TINY, "incoming").matrix, np.conj(M), rtol=0, atol=0)
    with pytest.raises(ValueError):
        build_M(0.0, TINY)


def test_static_operators():
    P = build_static("P", TINY).matrix
    Q = build_static("Q", TINY).matrix
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
    np.testing.assert_allclose(P + Q, np.eye(TINY.size), atol=1e-15)
    np.testing.assert_allclose(Q @ TINY.v, 0, atol=1e-13)
    T0 = build_static("T0", TINY).matrix
    np.testing.assert_allclose(T0, T0.T, rtol=0, atol=1e-16)
    with pytest.raises(ValueError):
        build_static("T9", TINY)


def test_threshold_split_is_exact_identity():
    lam = 0.05
    st_ = {k: build_static(k, TINY) for k in ("P", "T0", "vG1v", "vG2v")}
    M = build_M(lam, TINY).matrix
    M0 = build_M0(lam, TINY, st_).matrix
    np.testing.assert_allclose(M, g1(lam, TINY) * st_["P"].matrix + st_["T0"].matrix + M0, atol=1e-14)
    # g1 = g(lam) ||V||_1
    assert g1(lam, TINY) == pytest.approx(specfun.g_threshold(lam) * TINY.potential.l1_norm, rel=1e-12)
    # M1 is much smaller than M0 at small lam
    M1 = build_M1(lam, TINY, st_).matrix
    assert hs_norm(M1) < 1e-2 * hs_norm(M0)


def test_lambda_derivative_matrix():
    lam, d = 0.7, 1e-5
    fd = (build_vG0w_deriv(lam + d, 0, TINY).matrix - build_vG0w_deriv(lam - d, 0, TINY).matrix) / (2 * d)
    np.testing.assert_allclose(build_vG0w_deriv(lam, 1, TINY).matrix, fd, atol=1e-7)
    with pytest.raises(ValueError):
        build_vG0w_deriv(lam, 3, TINY)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 6.0))
def test_matrix_free_hs_norm(lam):
    dense = hs_norm(build_vG0w_deriv(lam, 0, TINY))
    assert hs_norm_vG0w(lam, TINY) == pytest.approx(dense, rel=1e-11)


def test_hs_norm_frozen_value():
    # frozen from the dense Frobenius norm
    fp = factor_potential(gaussian(Grid2D(64, 8.0), 1.0, 1.0))
    assert hs_norm_vG0w(10.0, fp) == pytest.approx(hs_norm(build_vG0w_deriv(10.0, 0, fp)), rel=1e-12)


def test_full_grid_convolution_matches_active_set_matrix():
    fp = factor_potential(ring(Grid2D(32, 8.0), 1.0, 2.0, 0.7))
    rng = np.random.default_rng(3)
    f = rng.standard_normal(fp.size)
    lam = 1.1
    dense = kernel_matrix(fp, "G0", lam) @ f
    conv = fp.gather(apply_G0(lam, "outgoing", GridFunction(fp.grid, fp.scatter(f))).values)
    np.testing.assert_allclose(conv, dense, rtol=1e-10, atol=1e-12)


def test_log_potential_of_gaussian_second_order():
    # N0 * e^{-|y|^2} = -(1/2)(log r + E1(r^2)/2); Nystrom error is O(h^2)
    errs = []
    for n in (128, 256):
        g = Grid2D(n, 16.0)
        u = apply_static("N0", g.sample(lambda x, y: np.exp(-(x * x + y * y))))
        r = g.radius()
        mask = (r > 0.5) & (r < 3)
        ref = -0.5 * (np.log(r[mask]) + 0.5 * special.exp1(r[mask] ** 2))
        errs.append(np.abs(u.values[mask].real - ref).max())
    assert errs[0] < 3e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_offset_table_cache_is_read_only():
    a = offset_table("G0", 0.5, 8, None, 1.0)
    b = offset_table("G0", 0.5, 8, None, 1.0)
    assert a is b
    with pytest.raises(ValueError):
        a[0, 0] = 0


def test_operator_dump_roundtrip(tmp_path):
    A = build_M(0.9, TINY)
    p = tmp_path / "M.bin"
    dump_operator(A, p)
    np.testing.assert_array_equal(load_operator(p), A.matrix)
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_operator(p)
