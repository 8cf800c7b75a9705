import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FROZEN_CROSSINGS
from wave2d.grid import Grid2D
from wave2d.potentials import ell1_dipole, factor_potential, gaussian
from wave2d.threshold import (ClassificationError, asymptotic_coeffs, classify, coupling_scan,
                              crossing_oracle, kernel_projector, reconstruct_resonance, static_set)

V64 = gaussian(Grid2D(64, 16.0), 1.0, 1.0)


def _moments(fp, Z):
    X = fp.coords
    return np.array([[np.sum(X[:, j] * fp.v * Z[:, k]) * fp.weight for k in range(Z.shape[1])]
                     for j in (0, 1)])


def test_weak_coupling_is_regular(V0):
    rep = classify(V0.scaled(0.1))
    assert rep.kind == "Regular"
    assert (rep.rank_S1, rep.rank_S2, rep.rank_S3) == (0, 0, 0)


def test_crossings_frozen(crossings):
    for k, g in FROZEN_CROSSINGS.items():
        assert crossings[k] == pytest.approx(g, rel=1e-8)


def test_scan_agrees_with_oracle():
    cr = coupling_scan(V64, (0.5, 22.0), n_steps=22)
    assert [c.kind for c in cr] == ["SecondKind", "FirstKind", "ThirdKind", "ThirdKind"]
    assert [c.multiplicity for c in cr] == [2, 1, 1, 1]
    oracle = np.unique(np.round(crossing_oracle(V64), 6))
    np.testing.assert_allclose([c.g_star for c in cr], oracle[oracle < 22], rtol=1e-7)
    assert min(c.gap for c in cr) > 1e3


def test_scan_edge_cases():
    assert coupling_scan(V64, (3.0, 3.0)) == []
    assert coupling_scan(V64, (0.5, 5.0), n_steps=5) == []
    a = coupling_scan(V64, (5.0, 12.0), n_steps=7)
    b = coupling_scan(V64, (5.0, 12.0), n_steps=7)
    assert [c.g_star for c in a] == [c.g_star for c in b]


def test_oracle_refuses_sign_changing_potential():
    with pytest.raises(ValueError):
        crossing_oracle(ell1_dipole(Grid2D(64, 16.0), 1.0))


@pytest.mark.parametrize("kind,ranks", [("SecondKind", (2, 2, 0)), ("FirstKind", (1, 0, 0)),
                                        ("ThirdKind", (1, 1, 1))])
def test_tuned_classification(tuned, kind, ranks):
    fp = tuned[kind]
    rep = classify(fp)
    assert rep.kind == kind
    assert (rep.rank_S1, rep.rank_S2, rep.rank_S3) == ranks
    Z = rep.basis_S1
    np.testing.assert_allclose(Z.T @ Z * fp.weight, np.eye(Z.shape[1]), atol=1e-10)
    assert np.abs(fp.v @ Z * fp.weight).max() < 1e-8
    if kind == "SecondKind":
        assert np.all(rep.eig_T2 < 0)


def test_T2_moment_identity(tuned):
    # <vG1v z, z> = -1/2 sum_j (int x_j v z)^2 on S1
    fp = tuned["SecondKind"]
    st_ = static_set(fp)
    rep = classify(fp, statics=st_)
    Z = rep.basis_S2
    T2 = Z.T @ st_["vG1v"].matrix @ Z * fp.weight
    m = _moments(fp, Z)
    np.testing.assert_allclose(T2, -0.5 * m.T @ m, atol=1e-10 * np.abs(T2).max())


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 25.0))
def test_classification_invariants(g):
    rep = classify(V64.scaled(g))
    assert rep.rank_S1 >= rep.rank_S2 >= rep.rank_S3 >= 0
    assert (rep.kind == "Regular") == (rep.rank_S1 == 0)
    if rep.kind == "SecondKind":
        assert rep.rank_S2 in (1, 2)


def test_kernel_projector_gap_and_strict():
    A = np.diag([1.0, 0.5, 3e-7])
    res = kernel_projector(A, tol=1e-6)
    assert res.rank == 1 and res.gap == pytest.approx(1e-6 / 3e-7)
    with pytest.raises(ClassificationError):
        kernel_projector(A, tol=1e-6, strict=True)
    assert kernel_projector(np.diag([1.0, 0.5, 1e-12]), tol=1e-6, strict=True).rank == 1
    with pytest.raises(ValueError):
        kernel_projector(np.ones((2, 3)))


@pytest.mark.parametrize("kind,klass", [("FirstKind", "SWave"), ("SecondKind", "PWave"),
                                        ("ThirdKind", "Eigenfunction")])
def test_resonance_reconstruction(tuned, kind, klass):
    fp = tuned[kind]
    st_ = static_set(fp)
    rep = classify(fp, statics=st_)
    for k in range(rep.rank_S1):
        z = rep.basis_S1[:, k]
        r = reconstruct_resonance(z, fp, st_)
        # w u = -zeta on the active set
        np.testing.assert_allclose(fp.w * fp.gather(r.u), -z, atol=1e-9 * np.abs(z).max())
        assert r.klass == klass
        assert r.c == pytest.approx(-r.c0)


def test_resonance_requires_v_orthogonality(tuned):
    fp = tuned["FirstKind"]
    with pytest.raises(ValueError):
        reconstruct_resonance(fp.v, fp)


def test_far_field_fit_matches_moments(tuned):
    fp = tuned["FirstKind"]
    st_ = static_set(fp)
    rep = classify(fp, statics=st_)
    r = reconstruct_resonance(rep.basis_S1[:, 0], fp, st_)
    fit = asymptotic_coeffs(r, fp.potential)
    assert abs(fit.c_fit - fit.c_moment) < 1e-3 * abs(fit.c_moment)
    assert fit.fit_residual < 1e-3
    with pytest.raises(ValueError):
        asymptotic_coeffs(r, fp.potential, annulus=(0.0, 0.1))
