"""Zero-energy classification, resonance reconstruction and coupling scans.

All subspace bases are stored as matrices whose columns are L^2-normalized
functions on the active set (``sum |zeta|^2 h^2 = 1``). Matrix elements of
Nystrom operators between such columns are ``zeta_k^T A zeta_l h^2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .grid import GridFunction
from .operators import apply_static, build_static
from .potentials import FactoredPotential, Potential, factor_potential

log = logging.getLogger(__name__)

KINDS = ("Regular", "FirstKind", "SecondKind", "ThirdKind")
DEFAULT_TOL = 1e-6
MIN_GAP = 10.0


class ClassificationError(RuntimeError):
    """Raised when the classification chain is inconsistent or ill-conditioned."""


# -- numerical kernels -------------------------------------------------------------------

@dataclass
class KernelResult:
    """Outcome of a tolerance-defined kernel computation.

    Attributes
    ----------
    basis : ndarray
        Orthonormal (Euclidean) columns spanning the numerical kernel.
    projector : ndarray
    rank : int
    gap : float
        ``min(sigma_kept_min / cut, cut / sigma_kernel_max)`` with
        ``cut = tol * scale``; ``inf`` when a side is empty.
    singular_values : ndarray
        Ascending.
    """

    basis: np.ndarray
    projector: np.ndarray
    rank: int
    gap: float
    singular_values: np.ndarray
    cut: float


def kernel_projector(A, tol=DEFAULT_TOL, scale=None, min_gap=MIN_GAP, strict=False):
    """Projection onto the span of singular vectors with ``sigma < tol * scale``.

    ``scale`` defaults to ``sigma_max(A)``; pass an external reference when
    ``A`` may vanish identically. Symmetric input is diagonalized with
    ``eigh`` so the kernel basis is real for real ``A``.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("kernel_projector needs a square matrix")
    n = A.shape[0]
    if n == 0:
        return KernelResult(np.zeros((0, 0)), np.zeros((0, 0)), 0, math.inf, np.zeros(0), 0.0)
    sym = np.allclose(A, A.T, atol=1e-12 * max(np.abs(A).max(), 1e-300))
    if sym:
        ev, vec = linalg.eigh(A)
        sv = np.abs(ev)
        order = np.argsort(sv)
        sv, vec = sv[order], vec[:, order]
    else:
        _, s, vh = linalg.svd(A)
        order = np.argsort(s)
        sv, vec = s[order], vh.conj().T[:, order]
    ref = sv[-1] if scale is None else float(scale)
    cut = tol * ref
    k = int(np.sum(sv < cut))
    kept_min = sv[k] if k < n else math.inf
    ker_max = sv[k - 1] if k > 0 else 0.0
    gap = min(kept_min / cut if cut > 0 else math.inf,
              cut / ker_max if ker_max > 0 else math.inf)
    basis = vec[:, :k]
    res = KernelResult(basis, basis @ basis.conj().T, k, gap, sv, cut)
    if gap < min_gap:
        msg = f"ill-conditioned kernel: gap {gap:.3g} < {min_gap}"
        if strict:
            raise ClassificationError(msg)
        log.warning(msg)
    return res


def _householder_complement(v):
    """Function mapping coefficients in ``v^perp`` to ambient vectors, plus
    the reduction ``A -> B`` of a symmetric matrix to ``v^perp``."""
    n = v.size
    vh = v / np.linalg.norm(v)
    e1 = np.zeros(n)
    e1[0] = 1.0
    u = vh - e1 if vh[0] <= 0 else vh + e1
    u /= np.linalg.norm(u)

    def reflect(X):
        # (I - 2 u u^T) X
        return X - 2.0 * np.outer(u, u @ X) if X.ndim == 2 else X - 2.0 * u * (u @ X)

    def reduce(A):
        HA = A - 2.0 * np.outer(u, u @ A)
        HAH = HA - 2.0 * np.outer(HA @ u, u)
        return HAH[1:, 1:]

    def lift(Y):
        Y = np.atleast_2d(Y.T).T
        X = np.vstack([np.zeros((1, Y.shape[1])), Y])
        return reflect(X)

    return reduce, lift


# -- classification -------------------------------------------------------------------

@dataclass
class ThresholdReport:
    """Result of the zero-energy classification chain."""

    kind: str
    rank_S1: int
    rank_S2: int
    rank_S3: int
    basis_S1: np.ndarray
    basis_S2: np.ndarray
    basis_S3: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray
    eig_T2: np.ndarray
    singular_values: dict = field(default_factory=dict)
    gaps: dict = field(default_factory=dict)
    resonance_constants: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def min_gap(self) -> float:
        return min(self.gaps.values()) if self.gaps else math.inf


def _l2(fp):
    return math.sqrt(fp.weight)


def static_set(fp: FactoredPotential):
    """Static operators used across the classification and expansions."""
    return {k: build_static(k, fp) for k in ("T0", "P", "vG1v", "vG2v")}


def _orient(Z, T0, v, h2):
    """Sign convention: ``<T0 zeta, v>`` with nonnegative real part; when that
    pairing vanishes, the largest-magnitude entry is made positive."""
    Z = Z.copy()
    for k in range(Z.shape[1]):
        s = float(np.real(v @ (T0 @ Z[:, k]) * h2))
        if abs(s) < 1e-10 * np.linalg.norm(v) * math.sqrt(h2):
            s = Z[np.argmax(np.abs(Z[:, k])), k]
        if s < 0:
            Z[:, k] = -Z[:, k]
    return Z


def classify(V, tol=DEFAULT_TOL, strict=False, statics=None) -> ThresholdReport:
    """Run S1 = ker QT0Q, T1, S2, T2, S3, T3 on a potential.

    Parameters
    ----------
    V : Potential or FactoredPotential
    tol : float
        Relative singular-value threshold.
    strict : bool
        Escalate gap warnings (gap < 10) to ``ClassificationError``.
    """
    fp = V if isinstance(V, FactoredPotential) else factor_potential(V)
    st = statics or static_set(fp)
    T0 = st["T0"].matrix
    h2 = fp.weight
    hn = math.sqrt(h2)
    v = fp.v
    reduce, lift = _householder_complement(v)
    warnings = []

    def kp(A, scale, label):
        res = kernel_projector(A, tol, scale=scale, strict=strict)
        if res.gap < MIN_GAP:
            warnings.append(f"{label}: gap {res.gap:.3g}")
        return res

    B = reduce(T0)
    k1 = kp(B, None, "QT0Q")
    sv = {"QT0Q": k1.singular_values[:4].tolist()}
    gaps = {"QT0Q": k1.gap}
    empty = np.zeros((fp.size, 0))
    if k1.rank == 0:
        return ThresholdReport("Regular", 0, 0, 0, empty, empty, empty,
                               np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)),
                               np.zeros(0), sv, gaps, [], warnings)
    Z1 = _orient(lift(k1.basis) / hn, T0, v, h2)  # L2-normalized columns
    vhat = v / np.linalg.norm(v)
    a = (vhat @ (T0 @ Z1)) * hn  # <T0 zeta, v/||v||> in L2
    T1 = np.outer(a, a)
    scale1 = k1.singular_values[-1] ** 2
    k2 = kp(T1, scale1, "T1")
    sv["T1"] = k2.singular_values.tolist()
    gaps["T1"] = k2.gap
    consts = (a / (np.linalg.norm(v) * hn)).tolist()  # c0 = <T0 zeta, v>/||v||^2
    if k2.rank == 0:
        return ThresholdReport("FirstKind", k1.rank, 0, 0, Z1, empty, empty, T1,
                               np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0), sv,
                               gaps, consts, warnings)
    Z2 = Z1 @ k2.basis
    G1 = st["vG1v"].matrix
    T2 = Z2.T @ G1 @ Z2 * h2
    T2 = 0.5 * (T2 + T2.T)
    scale2 = np.linalg.norm(G1, 2)
    k3 = kp(T2, scale2, "T2")
    sv["T2"] = k3.singular_values.tolist()
    gaps["T2"] = k3.gap
    if k3.rank == 0:
        ev, vec = linalg.eigh(T2)  # ascending: most negative first => kappa_1 >= kappa_2
        Z2 = Z2 @ vec
        T2d = np.diag(ev)
        if np.any(ev >= 0):
            warnings.append("T2 has nonnegative eigenvalues")
        return ThresholdReport("SecondKind", k1.rank, k2.rank, 0, Z1, Z2, empty, T1, T2d,
                               np.zeros((0, 0)), ev, sv, gaps, consts, warnings)
    Z3 = Z2 @ k3.basis
    ev2, vec2 = linalg.eigh(T2)
    G2 = st["vG2v"].matrix
    T3 = Z3.T @ G2 @ Z3 * h2
    T3 = 0.5 * (T3 + T3.T)
    s3 = np.abs(linalg.eigvalsh(T3))
    sv["T3"] = s3.tolist()
    if s3.min() < tol * np.linalg.norm(G2, 2):
        raise ClassificationError("T3 singular: inconsistent classification (discretization failure?)")
    # S2 basis: T2 eigenvectors, negative ones first, kernel last
    Z2 = Z2 @ vec2
    return ThresholdReport("ThirdKind", k1.rank, k2.rank, k3.rank, Z1, Z2, Z3, T1, T2, T3,
                           ev2[ev2 < -k3.cut], sv, gaps, consts, warnings)


# -- resonances ------------------------------------------------------------------------

@dataclass
class ResonanceFunction:
    """Bounded zero-energy solution ``u = N0(v zeta) - c0``.

    ``c`` and ``b`` are the far-field constant and dipole coefficients from
    the moment formulas: ``c = -c0``, ``b_j = -(1/2pi) int y_j V u``.
    """

    u: GridFunction
    c: complex
    b: tuple
    c0: complex
    zeta: np.ndarray
    klass: str


def _classify_resonance(c, b, unorm, tol):
    if abs(c) > tol * unorm:
        return "SWave"
    if max(abs(b[0]), abs(b[1])) > tol * unorm:
        return "PWave"
    return "Eigenfunction"


def reconstruct_resonance(zeta, fp: FactoredPotential, statics=None, tol=1e-3):
    """Rebuild the resonance function belonging to ``zeta`` in S1.

    ``w u = -zeta`` fixes the orientation.
    """
    st = statics or static_set(fp)
    h2 = fp.weight
    v = fp.v
    zeta = np.asarray(zeta)
    vn2 = v @ v * h2
    if abs(v @ zeta * h2) > 1e-6 * math.sqrt(vn2) * math.sqrt(np.sum(np.abs(zeta) ** 2) * h2):
        raise ValueError("zeta not orthogonal to v")
    c0 = complex(v @ (st["T0"].matrix @ zeta) * h2 / vn2)
    grid = fp.grid
    src = GridFunction(grid, fp.scatter(v * zeta))
    u = apply_static("N0", src) - c0
    Vfull = fp.potential.V
    X1, X2 = grid.mesh()
    b = tuple(complex(-np.sum(X * Vfull * u.values) * h2 / (2 * math.pi)) for X in (X1, X2))
    c = -c0
    unorm = float(np.abs(u.values).max())
    klass = _classify_resonance(c, b, unorm, tol)
    if abs(c0) < 1e-300:
        c0 = 0j
    return ResonanceFunction(u, c, b, c0, zeta, klass)


@dataclass
class AsymptoticFit:
    c_moment: complex
    b_moment: tuple
    c_fit: complex
    b_fit: tuple
    fit_residual: float


def asymptotic_coeffs(res: ResonanceFunction, V: Potential, annulus=(0.6, 0.8)) -> AsymptoticFit:
    """Moment coefficients and a least-squares far-field fit of
    ``u ~ c + b.x/|x|^2`` (quadrupole terms included as nuisance)."""
    grid = V.grid
    X1, X2 = grid.mesh()
    R = np.hypot(X1, X2)
    m = (R >= annulus[0] * grid.L) & (R <= annulus[1] * grid.L)
    if np.abs(V.V[m]).max() > 1e-12 * np.abs(V.V).max():
        raise ValueError("annulus overlaps the potential support")
    x1, x2, r2 = X1[m], X2[m], R[m] ** 2
    cols = [np.ones_like(x1), x1 / r2, x2 / r2,
            (x1 * x1 - x2 * x2) / r2 ** 2, 2 * x1 * x2 / r2 ** 2]
    A = np.column_stack(cols)
    y = res.u.values[m]
    coef, *_ = np.linalg.lstsq(A.astype(complex), y, rcond=None)
    resid = float(np.linalg.norm(A @ coef - y) / max(np.linalg.norm(y), 1e-300))
    return AsymptoticFit(res.c, res.b, complex(coef[0]), (complex(coef[1]), complex(coef[2])), resid)


# -- coupling scans --------------------------------------------------------------------

@dataclass
class Crossing:
    g_star: float
    kind: str
    rank_S1: int
    gap: float
    multiplicity: int


class _ScanModel:
    """``QT0Q(g)`` on ``v^perp`` for ``V = g V0``: ``U + g v0 N0 v0``."""

    def __init__(self, V0: Potential):
        self.V0 = V0
        self.fp0 = factor_potential(V0)
        st = build_static("vN0v", self.fp0).matrix
        reduce, _ = _householder_complement(self.fp0.v)
        self.BU = reduce(np.diag(self.fp0.U))
        self.BN = reduce(st)

    def eigs(self, g):
        return linalg.eigvalsh(self.BU + g * self.BN)

    def eig_k(self, g, k):
        return linalg.eigvalsh(self.BU + g * self.BN, subset_by_index=[k, k])[0]


def coupling_scan(V0: Potential, g_range, n_steps=40, rtol=1e-10, tol=DEFAULT_TOL,
                  classify_roots=True):
    """Locate couplings ``g`` where ``QT0Q`` for ``g V0`` becomes singular.

    Eigenvalues are tracked on a uniform grid of ``n_steps + 1`` couplings;
    every change in the number of negative eigenvalues is refined per
    eigenvalue index with Brent's method to relative ``rtol``. Roots that
    coincide within ``1e3 rtol`` are merged (degenerate pairs).
    """
    g0, g1_ = float(g_range[0]), float(g_range[1])
    if not g1_ > g0:
        return []
    model = _ScanModel(V0)
    gs = np.linspace(g0, g1_, n_steps + 1)
    nneg = [int(np.sum(model.eigs(g) < 0)) for g in gs]
    roots = []
    for i in range(n_steps):
        lo, hi = nneg[i], nneg[i + 1]
        if lo == hi:
            continue
        for k in range(min(lo, hi), max(lo, hi)):
            fa, fb = model.eig_k(gs[i], k), model.eig_k(gs[i + 1], k)
            if fa * fb > 0:
                continue
            r = optimize.brentq(lambda g: model.eig_k(g, k), gs[i], gs[i + 1],
                                xtol=rtol * gs[i], rtol=4 * np.finfo(float).eps)
            roots.append(r)
    roots.sort()
    merged = []
    for r in roots:
        if merged and abs(r - merged[-1][0]) <= 1e3 * rtol * r:
            merged[-1][1] += 1
        else:
            merged.append([r, 1])
    out = []
    for r, mult in merged:
        if classify_roots:
            try:
                rep = classify(V0.scaled(r), tol)
                kind, rank, gap = rep.kind, rep.rank_S1, rep.min_gap
            except ClassificationError as exc:
                log.warning("classification failed at g=%g: %s", r, exc)
                kind, rank, gap = "Unclassified", -1, 0.0
        else:
            kind, rank, gap = "", mult, math.nan
        out.append(Crossing(r, kind, rank, gap, mult))
    return out


def crossing_oracle(V0: Potential):
    """Independent crossing couplings for sign-definite attractive ``V0``:
    ``g* = 1/mu`` over positive eigenvalues ``mu`` of ``v0 N0 v0`` on ``v^perp``."""
    fp0 = factor_potential(V0)
    if np.any(fp0.U > 0):
        raise ValueError("oracle requires V0 < 0 on its support")
    reduce, _ = _householder_complement(fp0.v)
    mu = linalg.eigvalsh(reduce(build_static("vN0v", fp0).matrix))
    mu = mu[mu > 0]
    return np.sort(1.0 / mu)
