"""Stationary and time-dependent wave operators and the operator K.

The L^p growth probe built on these lives in ``wave2d.probe``.

The stationary representation used throughout is

    W+ u = u - int_0^inf G0(-lam) v M(+-lam)^{-1} v Pi(lam) u  lam dlam,

split into a low band (weight ``chi_{<=2a}``) and a high band (weight
``chi_{>2a}``). Which branch of ``M`` enters is the module constant
``M_BRANCH``; it is fixed by agreement with the split-step propagator.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, ndimage
from scipy.signal import fftconvolve

from . import specfun
from .grid import (BandWindow, Grid2D, GridFunction, apply_multiplier, chi_cutoff,
                   dstar_project, fourier_forward, lp_norm)
from .operators import build_M, build_vG0w_deriv, offset_table
from .potentials import FactoredPotential, Potential, factor_potential

log = logging.getLogger(__name__)

# Branch of M paired with G0(-lam) in the stationary formula for W+.
# R_V(lam^2 - i0) V = G0(-lam) v M(-lam)^{-1} v, i.e. the incoming branch.
M_BRANCH = "incoming"

TAIL_LIMIT = 1e-4


class DomainError(ValueError):
    """Input outside the resolvable band of the grid."""


class TruncationError(RuntimeError):
    """Propagated packet reached the edge of the periodic box."""


# -- quadrature ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureScheme:
    """lam-nodes for the two energy bands.

    Weights integrate ``dlam`` (the ``lam`` of the spectral measure and the
    ``chi`` factors are applied by the integrators). Low nodes are uniform in
    ``tau = -log lam``; high nodes are uniform in ``lam``.
    """

    a: float
    low_nodes: np.ndarray
    low_weights: np.ndarray
    high_nodes: np.ndarray
    high_weights: np.ndarray
    n_angles: int | None = None
    window: BandWindow | None = None

    @property
    def chi_low(self):
        return chi_cutoff(self.low_nodes, 2 * self.a, "LeQ")

    @property
    def chi_high(self):
        return chi_cutoff(self.high_nodes, 2 * self.a, "Gt")

    @property
    def size(self):
        return self.low_nodes.size + self.high_nodes.size

    def combined(self, bands=("low", "high")):
        """Nodes and effective weights ``w chi lam`` for the requested bands."""
        lams, wts = [], []
        if "low" in bands and self.low_nodes.size:
            lams.append(self.low_nodes)
            wts.append(self.low_weights * self.chi_low * self.low_nodes)
        if "high" in bands and self.high_nodes.size:
            lams.append(self.high_nodes)
            wts.append(self.high_weights * self.chi_high * self.high_nodes)
        if not lams:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(lams), np.concatenate(wts)

    def refined(self) -> "QuadratureScheme":
        """Same bands with half the node spacing."""
        return build_quadrature(self.window, self.a, spacing=_spacing(self) / 2,
                                n_angles=self.n_angles)


def _spacing(q: QuadratureScheme):
    if q.high_nodes.size > 1:
        return float(q.high_nodes[1] - q.high_nodes[0])
    lo = q.low_nodes
    return float(lo[-1] * (1 - lo[-2] / lo[-1])) if lo.size > 1 else 0.05


def _trapezoid(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def build_quadrature(window: BandWindow, a: float, spacing: float | None = None,
                     grid: Grid2D | None = None, n_angles: int | None = None) -> QuadratureScheme:
    """Quadrature covering the window of a band-limited input.

    The low band runs over ``[alpha, min(2a, beta)]`` (``chi_{<=2a}`` vanishes
    above ``2a``) and the high band over ``[max(a, alpha), beta]``
    (``chi_{>2a}`` vanishes below ``a``). ``spacing`` is the largest allowed
    step in ``lam``. The trapezoid rule in ``lam`` produces images of the
    scattered wave at distance ``2 pi / dlam`` from the potential; the default
    ``2 pi / (1.25 sqrt(2) L)`` keeps them off the grid.
    """
    if not a > 0:
        raise ValueError("cutoff scale a must be positive")
    if spacing is None:
        if grid is None:
            raise ValueError("give spacing or grid")
        spacing = 2 * math.pi / (1.25 * math.sqrt(2.0) * grid.L)
    al, be = window.alpha, window.beta
    lo_top = min(2 * a, be)
    if lo_top > al:
        t0, t1 = -math.log(lo_top), -math.log(al)
        n = max(8, int(math.ceil((t1 - t0) * lo_top / spacing)) + 1)
        tau = np.linspace(t0, t1, n)
        low = np.exp(-tau)
        lw = _trapezoid(n) * (tau[1] - tau[0]) * low
    else:
        low = lw = np.zeros(0)
    hi_bot = max(a, al)
    if be > hi_bot:
        n = max(8, int(math.ceil((be - hi_bot) / spacing)) + 1)
        high = np.linspace(hi_bot, be, n)
        hw = _trapezoid(n) * (high[1] - high[0])
    else:
        high = hw = np.zeros(0)
    return QuadratureScheme(a, low, lw, high, hw, n_angles, window)


# -- pieces shared by the integrators ------------------------------------------------------

def _angles_for(grid: Grid2D, lam: float, extent: float, n_angles=None):
    """Trapezoid angle count for ``e^{i lam w.x}`` with ``|x| <= extent``
    (a multiple of 8, so the set is invariant under the lattice symmetries)."""
    if n_angles:
        return n_angles
    k = int(math.ceil(2 * lam * extent + 32))
    return max(64, 8 * math.ceil(k / 8))


@dataclass(frozen=True)
class _Support:
    """Bounding box of the numerically nonzero samples of ``u``."""

    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray
    radius: float
    weight: float

    @classmethod
    def of(cls, u: GridFunction, rtol=1e-14):
        g = u.grid
        a = np.abs(u.values)
        top = a.max()
        if top == 0:
            return cls(g.x[:1], g.x[:1], np.zeros((1, 1), complex), 0.0, g.h * g.h)
        rows = np.nonzero((a > rtol * top).any(axis=1))[0]
        cols = np.nonzero((a > rtol * top).any(axis=0))[0]
        r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        x1, x2 = g.x[r0:r1], g.x[c0:c1]
        R = float(np.hypot(np.abs(x1).max(), np.abs(x2).max()))
        return cls(x1, x2, u.values[r0:r1, c0:c1], R, g.h * g.h)

    def trace(self, lam, K):
        th = 2 * math.pi * np.arange(K) / K
        E1 = np.exp(-1j * lam * np.outer(np.cos(th), self.x1))
        E2 = np.exp(-1j * lam * np.outer(np.sin(th), self.x2))
        t = np.einsum("kj,kj->k", E1 @ self.values, E2)
        return t * (self.weight / (2.0 * math.pi))


def pi_on_active(u: GridFunction, lam: float, fp: FactoredPotential, n_angles=None,
                 support: _Support | None = None):
    """``Pi(lam) u`` at the active nodes of ``fp`` and the circle trace used.

    The trace is the exact Fourier sum of the samples of ``u`` on their
    support box; the angle count resolves ``e^{i lam w.x}`` over the extents
    of both ``u`` and the active set.
    """
    sup = support or _Support.of(u)
    X = fp.coords
    R_act = float(np.hypot(X[:, 0], X[:, 1]).max())
    K = _angles_for(u.grid, lam, sup.radius + R_act, n_angles)
    trace = sup.trace(lam, K)
    th = 2 * math.pi * np.arange(K) / K
    E = np.exp(1j * lam * (np.outer(X[:, 0], np.cos(th)) + np.outer(X[:, 1], np.sin(th))))
    return E @ (trace / K), trace


def green_from_box(lam: float, branch: str, fp: FactoredPotential, f_active) -> np.ndarray:
    """``G0(+-lam) f`` on the full grid for ``f`` supported on the active box."""
    g = fp.grid
    r0, r1, c0, c1 = fp.box()
    box = np.zeros((r1 - r0, c1 - c0), dtype=complex)
    box[fp.rows - r0, fp.cols - c0] = f_active
    si = max(r1 - 1, g.n - 1 - r0)
    sj = max(c1 - 1, g.n - 1 - c0)
    tab = offset_table("G0", g.h, si, sj, lam, 0, branch)
    # kernel on offsets -si..si x -sj..sj
    top = np.concatenate([tab[:0:-1], tab], axis=0)
    K = np.concatenate([top[:, :0:-1], top], axis=1)
    full = fftconvolve(K, box, mode="full")
    # grid row i <-> full index i - r0 + si
    return full[si - r0: si - r0 + g.n, sj - c0: sj - c0 + g.n]


@dataclass
class NodeReport:
    lam: float
    band: str
    status: str
    detail: str = ""


@dataclass
class StationaryResult:
    """Output of ``w_stationary``: ``W+ u`` per multiplier and node diagnostics."""

    outputs: list
    scattered: list
    nodes: list = field(default_factory=list)

    @property
    def W(self) -> GridFunction:
        return self.outputs[0]

    @property
    def rejected(self):
        return [nd for nd in self.nodes if nd.status != "ok"]


def _solve_checked(A, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        return linalg.solve(A, b, check_finite=False)


def _integrate(fp, u, q, inverse_apply, bands, multipliers, branch_out="incoming"):
    """Sum over nodes of ``w chi lam G0(-lam) v X(lam)[v Pi(lam) u] m(lam)``."""
    g = u.grid
    lams, wts = q.combined(bands)
    nlow = q.low_nodes.size if "low" in bands else 0
    acc = [np.zeros((g.n, g.n), dtype=complex) for _ in multipliers]
    reports = []
    sup = _Support.of(u)
    for k, (lam, wt) in enumerate(zip(lams, wts)):
        band = "low" if k < nlow else "high"
        if wt == 0:
            continue
        piu, _ = pi_on_active(u, lam, fp, q.n_angles, sup)
        if not np.any(np.abs(piu) > 1e-300):
            continue
        try:
            y = inverse_apply(lam, fp.v * piu, band)
        except (linalg.LinAlgWarning, linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            reports.append(NodeReport(lam, band, "rejected", f"near-singular M: {exc}"))
            log.warning("node lam=%.4g rejected: %s", lam, exc)
            continue
        F = green_from_box(lam, branch_out, fp, fp.v * y)
        for i, m in enumerate(multipliers):
            acc[i] += (wt * (1.0 if m is None else m(lam))) * F
        reports.append(NodeReport(lam, band, "ok"))
    return acc, reports


def _direct_inverse(fp, branch):
    def apply(lam, rhs, band):
        return _solve_checked(build_M(lam, fp, branch).matrix, rhs)
    return apply


def _expansion_inverse(fp, branch, expansion_fn):
    direct = _direct_inverse(fp, branch)

    def apply(lam, rhs, band):
        if band != "low":
            return direct(lam, rhs, band)
        Minv = expansion_fn(lam)
        if branch == "incoming":
            # M(-lam) = conj M(lam) since U, v are real
            return np.conj(Minv @ np.conj(rhs))
        return Minv @ rhs
    return apply


def low_energy_inverse(fp: FactoredPotential, report=None):
    """Callable ``lam -> approximate M(lam)^{-1}`` from the threshold analysis.

    Regular uses its ``InverseExpansion``. Singular kinds use the
    Jensen-Nenciu approximant assembled from the expanded ``(M + S1)^{-1}``:
    the bare leading terms hold only between ``v ... v`` (Second/ThirdKind),
    and for FirstKind their small error along ``v`` is amplified by
    ``g(lam)`` in the far field of ``G0(-lam)``.
    """
    from .inversion import expand_regular, structured_inverse, threshold_pieces
    pc = threshold_pieces(fp, report)
    kind = pc.report.kind
    if kind == "Regular":
        ex = expand_regular(fp, pc)
        return ex.evaluate, kind
    return (lambda lam: structured_inverse(pc, lam)), kind


def w_stationary(V: Potential, u: GridFunction, q: QuadratureScheme,
                 inverse_mode: str = "DirectSolve", multipliers=(None,),
                 bands=("low", "high"), expansion=None, branch: str = M_BRANCH,
                 fp: FactoredPotential | None = None) -> StationaryResult:
    """Stationary wave operator ``W+ u``.

    Parameters
    ----------
    V : Potential
        Potential; ``V = 0`` returns ``u`` unchanged.
    u : GridFunction
        Band-limited input whose window is covered by ``q``.
    q : QuadratureScheme
    inverse_mode : {"DirectSolve", "Expansion"}
        ``Expansion`` replaces ``M^{-1}`` on low-band nodes by the threshold
        expansion (``expansion`` may supply the callable).
    multipliers : sequence of callables or None
        ``m(lam)`` inserted in the integrand; ``W+ f(|D|) u`` is obtained with
        ``m = f`` since ``f(lam) Pi(lam) u = Pi(lam) f(|D|) u``. One output per
        multiplier.
    bands : subset of {"low", "high"}
        Restricts the integral (the returned outputs then hold
        ``chi u - scattered`` for the selected bands only).

    Returns
    -------
    StationaryResult
    """
    if u.domain != "position":
        raise ValueError("u must be a position-domain function")
    if q.window is not None:
        q.window.check(u.grid)
    g = u.grid
    if not np.any(V.V):
        outs = [u if m is None else apply_multiplier(u, m) for m in multipliers]
        return StationaryResult(outs, [g.zeros() for _ in multipliers], [])
    fp = fp or factor_potential(V)
    if inverse_mode == "DirectSolve":
        inv = _direct_inverse(fp, branch)
    elif inverse_mode == "Expansion":
        fn = expansion or low_energy_inverse(fp)[0]
        inv = _expansion_inverse(fp, branch, fn)
    else:
        raise ValueError(f"unknown inverse_mode {inverse_mode!r}")
    acc, reports = _integrate(fp, u, q, inv, bands, multipliers)
    outs, scat = [], []
    for m, S in zip(multipliers, acc):
        base = u
        if tuple(bands) != ("low", "high"):
            side = "LeQ" if tuple(bands) == ("low",) else "Gt"
            base = apply_multiplier(base, lambda r, s=side: chi_cutoff(r, 2 * q.a, s))
        if m is not None:
            base = apply_multiplier(base, m)
        outs.append(base.with_values(base.values - S))
        scat.append(g.zeros().with_values(S))
    return StationaryResult(outs, scat, reports)


def w_minus(V: Potential, u: GridFunction, q: QuadratureScheme, **kw) -> GridFunction:
    """``W- = C W+ C^{-1}`` with ``C`` complex conjugation."""
    res = w_stationary(V, u.conj(), q, **kw)
    return res.W.conj()


def born_high_term(V: Potential, u: GridFunction, j: int, a: float,
                   q: QuadratureScheme | None = None, branch: str = M_BRANCH) -> GridFunction:
    """j-th term of the Born series of the high-energy part,
    ``int G0(-lam) w (-v G0 w)^j v Pi(lam) u chi_{>2a}(lam) lam dlam``.

    The inner resolvent uses the same branch as ``M`` in ``w_stationary``, so
    the terms sum to the high part of ``u - W+ u``.
    """
    if j not in range(5):
        raise ValueError("j must be in 0..4; use w_stationary for the remainder")
    if q is None:
        raise ValueError("a QuadratureScheme is required")
    if abs(q.a - a) > 1e-14 * a:
        q = QuadratureScheme(a, q.low_nodes, q.low_weights, q.high_nodes, q.high_weights,
                             q.n_angles, q.window)
    fp = factor_potential(V)

    def apply(lam, rhs, band):
        y = fp.U * rhs
        if j:
            B = build_vG0w_deriv(lam, 0, fp, branch).matrix
            for _ in range(j):
                y = -(B @ y)
        return y

    # G0(-lam) v y with v y = w (-vG0w)^j v Pi u requires y = U (...) v Pi u
    acc, _ = _integrate(fp, u, q, apply, ("high",), (None,))
    return u.with_values(acc[0])


# -- good / bad decomposition ---------------------------------------------------------------

@dataclass
class GoodBadSplit:
    """Good and bad parts of ``Pi(lam) u(z) - Pi(lam) u(0)``."""

    lam: float
    trace: np.ndarray
    n_theta: int = 24

    def _omega(self):
        K = self.trace.size
        th = 2 * math.pi * np.arange(K) / K
        return np.cos(th), np.sin(th)

    def _zw(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        c, s = self._omega()
        return np.outer(z[:, 0], c) + np.outer(z[:, 1], s)

    def good(self, z):
        """``-(lam^2/2pi) int (int_0^1 (1-t)(z.w)^2 e^{i lam z.w t} dt) u_hat dw``."""
        zw = self._zw(z)
        lam = self.lam
        n = max(self.n_theta, 16 + 2 * int(math.ceil(lam * np.abs(zw).max())))
        t, wt = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (t + 1)
        wt = 0.5 * wt
        inner = np.zeros(zw.shape, dtype=complex)
        for tk, wk in zip(t, wt):
            inner += wk * (1 - tk) * np.exp(1j * lam * zw * tk)
        K = self.trace.size
        integrand = zw ** 2 * inner * self.trace[None, :]
        return -(lam ** 2) * integrand.sum(axis=1) / K

    def bad(self, z):
        """``(i lam / 2pi) int (z.w) u_hat(lam w) dw``."""
        zw = self._zw(z)
        K = self.trace.size
        return 1j * self.lam * (zw * self.trace[None, :]).sum(axis=1) / K

    def difference(self, z):
        """``Pi(lam) u(z) - Pi(lam) u(0)`` directly."""
        zw = self._zw(z)
        K = self.trace.size
        return ((np.exp(1j * self.lam * zw) - 1) * self.trace[None, :]).sum(axis=1) / K


def split_good_bad(u: GridFunction, lam: float, n_angles: int | None = None) -> GoodBadSplit:
    """Taylor split of ``Pi(lam) u(z) - Pi(lam) u(0)`` into good and bad parts."""
    sup = _Support.of(u)
    K = _angles_for(u.grid, lam, sup.radius, n_angles)
    return GoodBadSplit(lam, sup.trace(lam, K))


# -- time-dependent oracle --------------------------------------------------------------------

@dataclass
class TimeDependentResult:
    times: list
    outputs: list
    increments: list
    dt: float
    tail_mass: list


def _free_symbol(grid: Grid2D):
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.h)
    return k[:, None] ** 2 + k[None, :] ** 2


def _tail_fraction(vals, width=None):
    n = vals.shape[0]
    w = width or max(2, n // 20)
    m = np.abs(vals) ** 2
    mask = np.zeros_like(m, dtype=bool)
    mask[:w, :] = mask[-w:, :] = mask[:, :w] = mask[:, -w:] = True
    tot = m.sum()
    return float(m[mask].sum() / tot) if tot > 0 else 0.0


def default_dt(V: Potential) -> float:
    """Largest step with ``dt |V|_inf < 0.1`` and ``dt lam_max^2 < 0.5``
    (``lam_max`` the Nyquist frequency)."""
    vmax = float(np.abs(V.V).max())
    nyq = V.grid.nyquist
    cands = [0.5 / (nyq * nyq) * 0.999]
    if vmax > 0:
        cands.append(0.1 / vmax * 0.999)
    return min(cands)


def propagate(V: Potential, psi: np.ndarray, t: float, dt: float) -> np.ndarray:
    """Strang split-step approximation of ``e^{-itH} psi`` (``t`` may be negative)."""
    if t == 0:
        return psi.copy()
    nsteps = max(1, int(math.ceil(abs(t) / dt)))
    tau = t / nsteps
    sym = _free_symbol(V.grid)
    half = np.exp(-0.5j * tau * V.V)
    kin = np.exp(-1j * tau * sym)
    out = psi.astype(complex)
    for _ in range(nsteps):
        out = half * out
        out = np.fft.ifft2(kin * np.fft.fft2(out))
        out = half * out
    return out


def free_propagate(grid: Grid2D, psi: np.ndarray, t: float) -> np.ndarray:
    """``e^{-itH0} psi`` exactly on the periodic grid."""
    return np.fft.ifft2(np.exp(-1j * t * _free_symbol(grid)) * np.fft.fft2(psi))


def w_time_dependent(V: Potential, u: GridFunction, t_list, dt: float | None = None,
                     tail_limit: float = TAIL_LIMIT) -> TimeDependentResult:
    """``e^{itH} e^{-itH0} u`` at each ``t`` by split-step propagation.

    Raises ``TruncationError`` when the freely evolved packet puts more than
    ``tail_limit`` of its mass in the boundary strip.
    """
    dt = dt or default_dt(V)
    outs, incs, tails = [], [], []
    prev = None
    for t in t_list:
        free = free_propagate(u.grid, u.values, t)
        tail = _tail_fraction(free)
        tails.append(tail)
        if tail > tail_limit:
            raise TruncationError(f"packet reached the boundary at t={t} (tail {tail:.2e})")
        out = propagate(V, free, -t, dt)
        gf = u.with_values(out)
        if prev is not None:
            incs.append(float((gf - prev).norm()))
        outs.append(gf)
        prev = gf
    return TimeDependentResult(list(t_list), outs, incs, dt, tails)


# -- operator K ---------------------------------------------------------------------------------

def _spectral_support(u: GridFunction, rtol=1e-13):
    uh = fourier_forward(u)
    a = np.abs(uh.values)
    r = u.grid.freq_radius()
    sel = a > rtol * a.max()
    return float(r[sel].min()), float(r[sel].max())


def _origin_offsets(grid: Grid2D):
    idx = np.abs(np.arange(grid.n) - grid.n // 2)
    return idx[:, None], idx[None, :]


def k_operator(u: GridFunction, method: str = "LambdaQuadrature",
               window: BandWindow | None = None, n_nodes: int | None = None,
               n_angles: int | None = None, origin_cell: float | None = None) -> GridFunction:
    """Operator ``K`` on grid functions.

    ``LambdaQuadrature`` integrates the incoming kernel against the angular
    mean of ``u_hat`` over the band of ``u``; ``RadialPV`` evaluates the
    principal-value transform of the angular average of ``u`` in the
    variable ``rho = |y|^2``.

    ``Ku`` has a logarithmic singularity at the origin. The origin node
    follows the same rule as the Nystrom diagonal: the smooth part at its
    point value plus the average of the ``log`` part over a square cell of
    side ``origin_cell`` (default: the grid step).
    """
    cell = origin_cell or u.grid.h
    if method == "LambdaQuadrature":
        return _k_lambda(u, window, n_nodes, n_angles, cell)
    if method == "RadialPV":
        return _k_radial(u, n_nodes, n_angles, cell)
    raise ValueError(f"unknown method {method!r}")


def _k_lambda(u, window, n_nodes, n_angles, cell):
    g = u.grid
    if window is None:
        lo, hi = _spectral_support(u)
        lo = max(lo - g.dxi, 0.5 * g.dxi)
        hi = hi + g.dxi
    else:
        lo, hi = window.alpha, window.beta
    if hi > g.nyquist:
        raise DomainError(f"band top {hi:.4g} exceeds Nyquist {g.nyquist:.4g}")
    R = g.L * math.sqrt(2.0)
    n = n_nodes or max(64, int(math.ceil((hi - lo) * R * 0.8)) + 32)
    t, w = np.polynomial.legendre.leggauss(n)
    lams = 0.5 * (hi - lo) * (t + 1) + lo
    wts = 0.5 * (hi - lo) * w
    di, dj = _origin_offsets(g)
    half = g.n // 2
    out = np.zeros((g.n, g.n), dtype=complex)
    sup = _Support.of(u)
    for lam, wt in zip(lams, wts):
        K = _angles_for(g, lam, sup.radius, n_angles)
        mean = sup.trace(lam, K).mean()  # Pi(lam) u (0)
        if mean == 0:
            continue
        tab = offset_table("G0", g.h, half, None, lam, 0, "incoming") / (g.h * g.h)
        if cell != g.h:
            tab[0, 0] = specfun.diagonal_value("G0", cell, lam, 0, "incoming")
        out += (wt * lam * mean) * tab[di, dj]
    return u.with_values(out)


def _angular_average(u: GridFunction, s: np.ndarray, n_angles: int) -> np.ndarray:
    """Mean of ``u`` over circles of radii ``s`` (order-5 spline interpolation).

    The spline is fitted on the block of nodes symmetric about the origin, so
    odd inputs average to zero up to rounding.
    """
    g = u.grid
    th = 2 * math.pi * np.arange(n_angles) / n_angles
    x1 = np.outer(s, np.cos(th)).ravel()
    x2 = np.outer(s, np.sin(th)).ravel()
    # block rows/cols 1..n-1 span [-L + h, L - h]
    coords = np.vstack([(x1 + g.L) / g.h - 1, (x2 + g.L) / g.h - 1])
    vals = u.values[1:, 1:]
    re = ndimage.map_coordinates(np.real(vals), coords, order=5, mode="mirror")
    if np.iscomplexobj(vals):
        im = ndimage.map_coordinates(np.imag(vals), coords, order=5, mode="mirror")
        re = re + 1j * im
    return re.reshape(s.size, n_angles).mean(axis=1)


def _k_radial(u, n_nodes, n_angles, cell):
    g = u.grid
    R = g.L - 3 * g.h
    rho_max = R * R
    _, hi = _spectral_support(u)
    na = n_angles or max(64, 8 * math.ceil((2 * hi * R + 32) / 8))
    # composite Gauss-Legendre in s = sqrt(rho), panels of one grid step
    npan = n_nodes or int(math.ceil(R / g.h))
    t, w = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, R, npan + 1)
    hs = np.diff(edges)
    s_nodes = (edges[:-1, None] + 0.5 * hs[:, None] * (t[None, :] + 1)).ravel()
    s_wts = (0.5 * hs[:, None] * w[None, :]).ravel()
    rho_nodes = s_nodes ** 2
    rho_wts = 2 * s_nodes * s_wts
    ubar_nodes = _angular_average(u, s_nodes, na)

    def K_of_rho(rho, split=False):
        # K = -(1/4pi) [reg + ubar (log rho - log|rho_max - rho|) + i pi ubar]
        rho = np.asarray(rho, dtype=float)
        inside = rho < rho_max
        ub = np.zeros(rho.shape, dtype=complex)
        if inside.any():
            ub[inside] = _angular_average(u, np.sqrt(rho[inside]), na)
        smooth = np.empty(rho.shape, dtype=complex)
        for blk in range(0, rho.size, 512):
            r = rho[blk:blk + 512]
            b = ub[blk:blk + 512]
            diff = (ubar_nodes[None, :] - b[:, None]) / (r[:, None] - rho_nodes[None, :])
            reg = diff @ rho_wts
            with np.errstate(divide="ignore", invalid="ignore"):
                far = np.where(b != 0, b * np.log(np.abs(rho_max - r)), 0.0)
            smooth[blk:blk + 512] = reg - far + 1j * math.pi * b
        if split:
            return -smooth / (4 * math.pi), ub
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(ub != 0, ub * np.log(rho), 0.0)
        return -(smooth + lg) / (4 * math.pi)

    di, dj = _origin_offsets(g)
    rho_idx = di ** 2 + dj ** 2
    uniq, inv = np.unique(rho_idx.ravel(), return_inverse=True)
    vals = np.empty(uniq.size, dtype=complex)
    pos = uniq > 0
    vals[pos] = K_of_rho(uniq[pos] * g.h * g.h)
    # origin: smooth part at rho = 0 plus the cell average of -(ubar/2pi) log r
    sm0, _ = K_of_rho(np.array([0.0]), split=True)
    logpart = specfun.square_cell_average(
        lambda r: -_angular_average(u, r, na) * np.log(r) / (2 * math.pi), cell, 16)
    vals[~pos] = sm0[0] + logpart
    return u.with_values(vals[inv].reshape(g.n, g.n))
