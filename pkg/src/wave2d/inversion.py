"""Inversion of ``M(lam)`` near the threshold.

Block inversion (Schur complement / Feshbach) and the Jensen-Nenciu lemma are
implemented for dense matrices; the small-``lam`` expansions of ``M(lam)^{-1}``
for each threshold kind are assembled from static operators and carried as
sums ``profile(lam) * operator`` with symbolic profiles, so slope tests can
divide by exact powers of ``g(lam)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import specfun
from .operators import build_M, g1 as g1_of
from .potentials import FactoredPotential
from .threshold import ThresholdReport, _householder_complement, classify, static_set

log = logging.getLogger(__name__)


class SingularBlockError(linalg.LinAlgError):
    """A block that must be inverted is numerically singular."""

    def __init__(self, block, cond):
        super().__init__(f"block {block!r} singular (condition number {cond:.3g})")
        self.block = block
        self.cond = cond


class SingularSignal(Exception):
    """``B = S - S (A+S)^{-1} S`` is singular, hence so is ``A``."""


# -- block algebra -----------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSplit:
    """Complementary orthogonal projections given by orthonormal bases.

    ``basis1`` and ``basis2`` are real with orthonormal columns spanning the
    ranges of ``p`` and ``q``.
    """

    basis1: np.ndarray
    basis2: np.ndarray

    @property
    def p_proj(self):
        return self.basis1 @ self.basis1.T

    @property
    def q_proj(self):
        return self.basis2 @ self.basis2.T

    @classmethod
    def from_projection(cls, p, tol=1e-8):
        p = np.asarray(p)
        ev, vec = linalg.eigh(0.5 * (p + p.T))
        one = ev > 0.5
        if np.any(np.abs(ev[one] - 1) > tol) or np.any(np.abs(ev[~one]) > tol):
            raise ValueError("not an orthogonal projection")
        return cls(vec[:, one], vec[:, ~one])

    @classmethod
    def coordinate(cls, n, idx):
        e = np.eye(n)
        mask = np.zeros(n, bool)
        mask[list(idx)] = True
        return cls(e[:, mask], e[:, ~mask])


def _inv(A, block, cond_max=1e14):
    A = np.atleast_2d(A)
    if A.size == 0:
        return A.copy()
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularBlockError(block, cond)
    return np.linalg.inv(A)


def feshbach_invert(A, split: BlockSplit, return_blocks=False):
    """``A^{-1}`` from the Schur complement ``d = (a11 - a12 a22^{-1} a21)^{-1}``."""
    A = np.asarray(A)
    B1, B2 = split.basis1, split.basis2
    a11, a12 = B1.T @ A @ B1, B1.T @ A @ B2
    a21, a22 = B2.T @ A @ B1, B2.T @ A @ B2
    a22i = _inv(a22, "a22")
    d = _inv(a11 - a12 @ a22i @ a21, "d")
    x12 = -d @ a12 @ a22i
    x21 = -a22i @ a21 @ d
    x22 = a22i + a22i @ a21 @ d @ a12 @ a22i
    inv = B1 @ d @ B1.T + B1 @ x12 @ B2.T + B2 @ x21 @ B1.T + B2 @ x22 @ B2.T
    if return_blocks:
        return inv, {"d": d, "x12": x12, "x21": x21, "x22": x22, "cond_a22": np.linalg.cond(a22)}
    return inv


def jn_invert(A, S, basis=None, cond_max=1e14):
    """Jensen-Nenciu inverse with an orthogonal projection ``S``.

    ``A^{-1} = (A+S)^{-1} + (A+S)^{-1} S B^{-1} S (A+S)^{-1}`` with
    ``B = S - S (A+S)^{-1} S`` on the range of ``S``. Raises ``SingularSignal``
    when ``B`` is singular.
    """
    A = np.asarray(A)
    S = np.asarray(S)
    if basis is None:
        basis = BlockSplit.from_projection(S).basis1
    AS_inv = _inv(A + S, "A+S", cond_max)
    b = np.eye(basis.shape[1]) - basis.T @ AS_inv @ basis
    cond = np.linalg.cond(b) if b.size else 1.0
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularSignal(f"B singular (condition {cond:.3g}); A is not invertible")
    Bi = basis @ np.linalg.inv(b) @ basis.T if b.size else 0.0
    return AS_inv + AS_inv @ Bi @ AS_inv


def invert_M_direct(lam, fp: FactoredPotential, branch="outgoing", cond_max=1e13):
    """Dense LU inverse of ``M(+-lam)`` on the active set."""
    M = build_M(lam, fp, branch).matrix
    lu, piv = linalg.lu_factor(M)
    cond_est = np.abs(np.diag(lu)).max() / max(np.abs(np.diag(lu)).min(), 1e-300)
    if cond_est > cond_max:
        raise SingularBlockError("M(lambda)", cond_est)
    return linalg.lu_solve((lu, piv), np.eye(M.shape[0], dtype=M.dtype))


# -- profiles ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Scalar function of ``lam`` identified by ``pid``.

    Known ids: ``1``, ``g``, ``g^-1``, ``h``, ``h1``, ``h1^-1``,
    ``lam^2 g``, ``lam^-2 g^-1``, ``lam^-2``; ``c`` carries the constant
    (``c1``/``c2``) and ``l1`` the value ``||V||_1``.
    """

    pid: str
    c: complex = 0.0
    l1: float = 0.0

    def __call__(self, lam):
        g = specfun.g_threshold(lam)
        p = self.pid
        if p == "1":
            return 1.0
        if p == "g":
            return g
        if p == "g^-1":
            return 1.0 / g
        if p in ("h", "h1"):
            return 1.0 / (g * self.l1 + self.c)
        if p == "h1^-1":
            return g * self.l1 + self.c
        if p == "lam^2 g":
            return lam * lam * g
        if p == "lam^-2 g^-1":
            return 1.0 / (lam * lam * g)
        if p == "lam^-2":
            return 1.0 / (lam * lam)
        raise ValueError(f"unknown profile {p!r}")


@dataclass
class Term:
    profile: Profile
    op: np.ndarray
    rank: int
    label: str = ""


@dataclass
class InverseExpansion:
    """``sum_k profile_k(lam) op_k (+ lam-dependent matrix terms)``.

    ``matrix_terms`` hold ``(pid, callable)`` pairs whose callable returns a
    full matrix; they are used for small matrix-valued profiles such as
    ``D(lam) = C(lam)^{-1}``.
    """

    kind: str
    terms: list
    remainder_order: tuple
    matrix_terms: list = field(default_factory=list)
    sandwich: bool = False  # leading term only meaningful between v ... v
    info: dict = field(default_factory=dict)

    def evaluate(self, lam):
        out = None
        for t in self.terms:
            val = t.profile(lam) * t.op
            out = val if out is None else out + val
        for _, fn in self.matrix_terms:
            val = fn(lam)
            out = val if out is None else out + val
        return out

    def describe(self):
        rows = [{"profile": t.profile.pid, "rank": int(t.rank), "hs_norm": float(np.linalg.norm(t.op)),
                 "label": t.label} for t in self.terms]
        rows += [{"profile": pid, "rank": None, "hs_norm": None, "label": "matrix"} for pid, _ in self.matrix_terms]
        return rows


def _rank(A, rtol=1e-10):
    if A.size == 0:
        return 0
    s = linalg.svdvals(A)
    return int(np.sum(s > rtol * max(s[0], 1e-300)))


# -- static pieces -------------------------------------------------------------------------

@dataclass
class ThresholdPieces:
    """Static operators shared by all expansions of one potential."""

    fp: FactoredPotential
    st: dict
    report: ThresholdReport
    Hc: np.ndarray  # orthonormal basis of v-perp (Euclidean)
    vstar: np.ndarray  # v/||v|| as coordinate vector with <vstar, vstar>_L2 = 1
    S1: np.ndarray
    D: np.ndarray  # Q (QT0Q)^{-1} Q (regular) or Q D0 Q (singular)
    c: float  # c1 or c2
    L: np.ndarray  # L or L1
    l1: float

    @property
    def h2(self):
        return self.fp.weight


def _proj(Z, h2):
    """Operator matrix of ``sum zeta_k (x) zeta_k`` for L2-orthonormal columns."""
    return Z @ Z.T * h2


def threshold_pieces(fp: FactoredPotential, report: ThresholdReport | None = None,
                     statics=None) -> ThresholdPieces:
    st = statics or static_set(fp)
    rep = report or classify(fp, statics=st)
    h2 = fp.weight
    T0 = st["T0"].matrix
    n = fp.size
    _, lift = _householder_complement(fp.v)
    Hc = lift(np.eye(n - 1))
    S1 = _proj(rep.basis_S1, h2) if rep.rank_S1 else np.zeros((n, n))
    B = Hc.T @ (T0 + S1) @ Hc
    D = Hc @ _inv(0.5 * (B + B.T), "QT0Q+S1") @ Hc.T
    vn = math.sqrt(fp.v @ fp.v * h2)
    vstar = fp.v / vn
    # <vstar | T0 - T0 D T0 | vstar> with bilinear L2 pairing
    c = float(vstar @ (T0 - T0 @ D @ T0) @ vstar * h2)
    P = st["P"].matrix
    left = P - D @ T0 @ P
    right = P - P @ T0 @ D
    L = left @ right
    return ThresholdPieces(fp, st, rep, Hc, vstar, S1, D, c, L, vn * vn)


# -- expansions ---------------------------------------------------------------------------------

def expand_regular(fp: FactoredPotential, pieces: ThresholdPieces | None = None) -> InverseExpansion:
    """``M(lam)^{-1} = h(lam) L + Q(QT0Q)^{-1}Q + O(g lam^2)``."""
    pc = pieces or threshold_pieces(fp)
    if pc.report.kind != "Regular":
        raise ValueError(f"expand_regular called for a {pc.report.kind} potential")
    terms = [Term(Profile("h", pc.c, pc.l1), pc.L, _rank(pc.L), "L"),
             Term(Profile("1"), pc.D, _rank(pc.D), "Q(QT0Q)^-1Q")]
    return InverseExpansion("Regular", terms, (2, 1), info={"c1": pc.c})


def R1_matrix(pc: ThresholdPieces, lam):
    """``v (G1 + g(lam)^{-1} G2) v``."""
    g = specfun.g_threshold(lam)
    return pc.st["vG1v"].matrix + pc.st["vG2v"].matrix / g


def N_matrix(pc: ThresholdPieces, lam):
    """``N(lam) = h1(lam) L1 + Q D0 Q``."""
    h1 = 1.0 / (g1_of(lam, pc.fp) + pc.c)
    return h1 * pc.L + pc.D


def A0_approx(pc: ThresholdPieces, lam, order=1):
    """``(M + S1)^{-1}`` through ``N + lam^2 g N R1 N`` (``order=1``) or ``N``."""
    N = N_matrix(pc, lam)
    if order == 0:
        return N
    g = specfun.g_threshold(lam)
    return N + (lam * lam * g) * (N @ R1_matrix(pc, lam) @ N)


def X_matrix(pc: ThresholdPieces, lam):
    """Displayed terms of ``X(lam)`` on ``S1``."""
    g = specfun.g_threshold(lam)
    h1 = 1.0 / (g1_of(lam, pc.fp) + pc.c)
    R1 = R1_matrix(pc, lam)
    L1 = pc.L
    inner = R1 + h1 * (L1 @ R1 + R1 @ L1) + h1 * h1 * (L1 @ R1 @ L1)
    return -(g / h1) * (pc.S1 @ inner @ pc.S1)


def B1_model(pc: ThresholdPieces, lam):
    """``-h1(lam) (T1 - lam^2 X(lam))`` as an operator matrix."""
    h1 = 1.0 / (g1_of(lam, pc.fp) + pc.c)
    T0 = pc.st["T0"].matrix
    P = pc.st["P"].matrix
    T1 = pc.S1 @ T0 @ P @ T0 @ pc.S1
    return -h1 * (T1 - lam * lam * X_matrix(pc, lam))


def B1_direct(pc: ThresholdPieces, lam):
    """``S1 - S1 (M + S1)^{-1} S1`` from a dense solve."""
    A0 = np.linalg.inv(build_M(lam, pc.fp).matrix + pc.S1)
    return pc.S1 - pc.S1 @ A0 @ pc.S1


def structured_inverse(pc: ThresholdPieces, lam):
    """Jensen-Nenciu approximant built from the truncated expansion of
    ``(M+S1)^{-1}``; ``B1`` is inverted exactly on the range of ``S1``."""
    A0 = A0_approx(pc, lam, order=1)
    Z = pc.report.basis_S1
    if Z.shape[1] == 0:
        return A0
    h2 = pc.h2
    b = np.eye(Z.shape[1]) - Z.T @ A0 @ Z * h2
    Bi = Z @ np.linalg.inv(b) @ Z.T * h2
    return A0 + A0 @ Bi @ A0


def C_matrix(pc: ThresholdPieces, lam):
    """Matrix of ``S2 v (G1 + g^{-1} G2) v S2`` in the T2 eigenbasis."""
    Z2 = pc.report.basis_S2
    h2 = pc.h2
    g = specfun.g_threshold(lam)
    T2 = Z2.T @ pc.st["vG1v"].matrix @ Z2 * h2
    G2 = Z2.T @ pc.st["vG2v"].matrix @ Z2 * h2
    return T2 + G2 / g


def expand_singular(fp: FactoredPotential, report: ThresholdReport | None = None,
                    pieces: ThresholdPieces | None = None) -> InverseExpansion:
    """Leading singular structure of ``M(lam)^{-1}`` for the reported kind.

    FirstKind: ``N(lam) - c3^{-1} h1^{-1} (N zeta) (x) (N zeta)`` with
    ``c3 = ||P T0 zeta||^2``, remainder ``O(g^3 lam^2)``.
    SecondKind: ``-g^{-1} lam^{-2} S2 Rt1(lam)^{-1} S2`` (meaningful between
    ``v ... v``); the residual stays bounded up to logarithms.
    ThirdKind with ``S2 = S3``: ``-lam^{-2} S3 T3^{-1} S3``.
    """
    pc = pieces or threshold_pieces(fp, report)
    rep = pc.report
    h2 = pc.h2
    if rep.kind == "Regular":
        raise ValueError("expand_singular called for a regular potential")
    T0 = pc.st["T0"].matrix
    P = pc.st["P"].matrix
    if rep.kind == "FirstKind":
        z = rep.basis_S1[:, 0]
        PT0z = P @ T0 @ z
        c3 = float(PT0z @ PT0z * h2)
        Lz = pc.L @ z
        zz = np.outer(z, z) * h2
        LzLz = np.outer(Lz, Lz) * h2
        cross = (np.outer(Lz, z) + np.outer(z, Lz)) * h2
        terms = [Term(Profile("1"), pc.D - cross / c3, _rank(pc.D), "QD0Q - c3^-1 (L1z z + z L1z)"),
                 Term(Profile("h1", pc.c, pc.l1), pc.L - LzLz / c3, 2, "L1 - c3^-1 L1z L1z"),
                 Term(Profile("h1^-1", pc.c, pc.l1), -zz / c3, 1, "-c3^-1 z z")]
        return InverseExpansion("FirstKind", terms, (2, 3), info={"c2": pc.c, "c3": c3})
    if rep.kind == "SecondKind":
        Z2 = rep.basis_S2

        def lead(lam):
            D = np.linalg.inv(C_matrix(pc, lam))
            g = specfun.g_threshold(lam)
            return -(Z2 @ D @ Z2.T * h2) / (g * lam * lam)

        return InverseExpansion("SecondKind", [], (0, 0), [("lam^-2 g^-1 D(lam)", lead)],
                                sandwich=True, info={"kappa2": (-rep.eig_T2).tolist(), "c2": pc.c})
    # ThirdKind
    if rep.rank_S2 != rep.rank_S3:
        Z2 = rep.basis_S2

        def lead(lam):
            D = np.linalg.inv(C_matrix(pc, lam))
            g = specfun.g_threshold(lam)
            return -(Z2 @ D @ Z2.T * h2) / (g * lam * lam)

        return InverseExpansion("ThirdKind", [], (0, 0), [("lam^-2 g^-1 D(lam)", lead)],
                                sandwich=True, info={"S3_eq_S2": False})
    Z3 = rep.basis_S3
    T3i = np.linalg.inv(rep.T3)
    op = -(Z3 @ T3i @ Z3.T * h2)
    return InverseExpansion("ThirdKind", [Term(Profile("lam^-2"), op, Z3.shape[1], "-S3 T3^-1 S3")],
                            (0, 0), sandwich=True, info={"S3_eq_S2": True})


def third_kind_blocks(pc: ThresholdPieces, lam):
    """``Rt1(lam)^{-1} = g S3 T3^{-1} S3 + L4(lam)`` in the S2 basis.

    Returns the matrices ``(g T3^{-1} part, L4 part)``, each in the S2 basis
    with the ``S2 minus S3`` block first.
    """
    rep = pc.report
    h2 = pc.h2
    Z2, Z3 = rep.basis_S2, rep.basis_S3
    # orthonormal split of S2 into (S2 - S3) and S3
    coef3 = Z2.T @ Z3 * h2
    split = BlockSplit.from_projection(coef3 @ coef3.T)
    X2, X3 = split.basis2, split.basis1
    T = Z2.T @ pc.st["vG1v"].matrix @ Z2 * h2
    Tt = Z2.T @ pc.st["vG2v"].matrix @ Z2 * h2
    g = specfun.g_threshold(lam)
    T22 = X2.T @ T @ X2
    t22, t23, t32, t33 = X2.T @ Tt @ X2, X2.T @ Tt @ X3, X3.T @ Tt @ X2, X3.T @ Tt @ X3
    t33i = np.linalg.inv(t33)
    k2 = X2.shape[1]
    if k2:
        T22i = np.linalg.inv(T22)
        dt = T22i @ np.linalg.inv(np.eye(k2) + (t22 - t23 @ t33i @ t32) @ T22i / g)
    else:
        dt = np.zeros((0, 0))
    L4 = np.block([[dt, -dt @ t23 @ t33i], [-t33i @ t32 @ dt, t33i @ t32 @ dt @ t23 @ t33i]])
    G = np.zeros_like(L4, dtype=complex)
    G[k2:, k2:] = g * t33i
    W = np.hstack([X2, X3])
    return W @ G @ W.T, W @ L4 @ W.T, (W.T @ (T + Tt / g) @ W)


# -- certification ------------------------------------------------------------------------------

@dataclass
class SlopeFit:
    slope: float
    intercept: float
    lams: np.ndarray
    residuals: np.ndarray


def fit_slope(lams, values) -> SlopeFit:
    lams = np.asarray(lams, float)
    values = np.asarray(values, float)
    A = np.vstack([np.log(lams), np.ones_like(lams)]).T
    (s, c), *_ = np.linalg.lstsq(A, np.log(values), rcond=None)
    return SlopeFit(float(s), float(c), lams, values)


def certify(expansion: InverseExpansion, fp: FactoredPotential, lams, g_power=None):
    """Residual of ``expansion`` against dense inversion over ``lams``.

    Returns the slope of ``log(||res|| / |g|^k)`` where ``k`` defaults to the
    log power of the remainder order; sandwich expansions are compared as
    ``v (.) v``.
    """
    k = expansion.remainder_order[1] if g_power is None else g_power
    res = []
    for lam in lams:
        Minv = invert_M_direct(lam, fp)
        diff = Minv - expansion.evaluate(lam)
        if expansion.sandwich:
            diff = fp.v[:, None] * diff * fp.v[None, :]
        res.append(np.linalg.norm(diff) / abs(specfun.g_threshold(lam)) ** k)
    return fit_slope(lams, res)


def neumann_inverse(lam, fp: FactoredPotential, terms=5):
    """``sum_{j<terms} (-1)^j U (vG0w)^j`` truncation of ``M(lam)^{-1}``."""
    from .operators import build_vG0w_deriv
    K = build_vG0w_deriv(lam, 0, fp).matrix
    U = np.diag(fp.U)
    out = np.zeros_like(K)
    term = np.eye(fp.size, dtype=complex)
    for j in range(terms):
        out = out + ((-1) ** j) * term
        term = term @ K
    # M = (1 + vG0w) U since vG0v = vG0w U and U^2 = 1
    return U @ out
