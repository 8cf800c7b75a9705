import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wave2d import specfun
from wave2d.inversion import (B1_direct, B1_model, BlockSplit, Profile, SingularBlockError,
                              SingularSignal, certify, expand_regular, expand_singular,
                              feshbach_invert, fit_slope, invert_M_direct, jn_invert,
                              neumann_inverse, structured_inverse, threshold_pieces)
from wave2d.operators import build_M
from wave2d.potentials import factor_potential
from wave2d.threshold import classify

LAMS = np.geomspace(1e-3, 1e-1, 9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_feshbach_and_jn_reconstruct_inverse(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 2 * np.sqrt(n) * np.eye(n)
    ref = np.linalg.inv(A)
    k = int(rng.integers(1, n))
    split = BlockSplit.coordinate(n, rng.choice(n, k, replace=False))
    err = np.linalg.norm(feshbach_invert(A, split) - ref) / np.linalg.norm(ref)
    assert err < 1e-10
    Qm, _ = np.linalg.qr(rng.standard_normal((n, k)))
    err = np.linalg.norm(jn_invert(A, Qm @ Qm.T) - ref) / np.linalg.norm(ref)
    assert err < 1e-10


def test_singular_blocks_are_reported():
    A = np.diag([1.0, 2.0, 0.0])
    with pytest.raises(SingularBlockError):
        feshbach_invert(A, BlockSplit.coordinate(3, [0, 1]))
    S = np.diag([0.0, 0.0, 1.0])
    with pytest.raises(SingularSignal):
        jn_invert(A, S)
    with pytest.raises(ValueError):
        BlockSplit.from_projection(np.diag([0.5, 1.0]))


def test_feshbach_blocks():
    A = np.array([[4.0, 1.0], [2.0, 3.0]])
    inv, blocks = feshbach_invert(A, BlockSplit.coordinate(2, [0]), return_blocks=True)
    np.testing.assert_allclose(blocks["d"], [[1 / (4 - 2 / 3)]])
    np.testing.assert_allclose(inv, np.linalg.inv(A))


def test_direct_inverse(small_fp):
    M = build_M(0.3, small_fp).matrix
    np.testing.assert_allclose(invert_M_direct(0.3, small_fp) @ M, np.eye(small_fp.size), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-10, 10))
def test_fit_slope_exact_on_power_laws(s, c):
    lams = np.geomspace(1e-3, 1.0, 7)
    fit = fit_slope(lams, np.exp(c) * lams**s)
    assert fit.slope == pytest.approx(s, abs=1e-9)
    assert fit.intercept == pytest.approx(c, abs=1e-8)


def test_profiles():
    lam = 0.01
    g = specfun.g_threshold(lam)
    assert Profile("g")(lam) == g
    assert Profile("h", 0.5, 2.0)(lam) == pytest.approx(1 / (2 * g + 0.5))
    assert Profile("lam^-2 g^-1")(lam) == pytest.approx(1 / (lam * lam * g))
    with pytest.raises(ValueError):
        Profile("sqrt")(lam)


def test_regular_expansion_order(V0):
    fp = factor_potential(V0.scaled(2.0))
    ex = expand_regular(fp)
    assert [t.profile.pid for t in ex.terms] == ["h", "1"]
    # frozen: slope 2.01 over [1e-3, 1e-1]
    assert certify(ex, fp, LAMS).slope == pytest.approx(2.01, abs=0.05)
    with pytest.raises(ValueError):
        expand_singular(fp)


def test_first_kind_expansion_order(tuned):
    ex = expand_singular(tuned["FirstKind"])
    assert ex.kind == "FirstKind" and ex.remainder_order == (2, 3)
    assert certify(ex, tuned["FirstKind"], LAMS).slope == pytest.approx(2.24, abs=0.1)
    with pytest.raises(ValueError):
        expand_regular(tuned["FirstKind"])


def test_second_kind_leading_term_removes_growth(tuned):
    fp = tuned["SecondKind"]
    ex = expand_singular(fp)
    assert ex.sandwich
    raw = [np.linalg.norm(fp.v[:, None] * invert_M_direct(l, fp) * fp.v[None, :]) for l in LAMS]
    assert fit_slope(LAMS, raw).slope < -1.8  # lam^-2 up to logs
    assert abs(certify(ex, fp, LAMS).slope) < 0.3


def test_third_kind_leading_term(tuned):
    fp = tuned["ThirdKind"]
    ex = expand_singular(fp)
    assert ex.info["S3_eq_S2"] and [t.profile.pid for t in ex.terms] == ["lam^-2"]
    assert abs(certify(ex, fp, LAMS).slope) < 0.3


@pytest.mark.parametrize("kind", ["FirstKind", "SecondKind", "ThirdKind"])
def test_B1_model_remainder_bound(tuned, kind):
    pc = threshold_pieces(tuned[kind])
    lams = np.geomspace(1e-3, 3e-2, 6)
    res = [np.linalg.norm(B1_direct(pc, l) - B1_model(pc, l)) / abs(specfun.g_threshold(l)) ** 2
           for l in lams]
    assert fit_slope(lams, res).slope >= 3.7


def test_structured_inverse_close_to_dense(tuned):
    fp = tuned["FirstKind"]
    pc = threshold_pieces(fp)
    for lam in (1e-3, 1e-2):
        ref = invert_M_direct(lam, fp)
        err = np.linalg.norm(structured_inverse(pc, lam) - ref) / np.linalg.norm(ref)
        assert err < 1e-3


def test_neumann_series_converges_for_weak_coupling(V0):
    fp = factor_potential(V0.scaled(0.2))
    ref = invert_M_direct(3.0, fp)
    errs = [np.linalg.norm(neumann_inverse(3.0, fp, k) - ref) for k in (2, 4, 8)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3 * np.linalg.norm(ref)
