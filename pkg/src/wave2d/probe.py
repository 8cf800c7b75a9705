"""L^p growth probe for the stationary wave operator over dilation families.

Members are ``u_s = U1(s x)`` where ``U1`` is the band-limited projection of
a base profile onto a window; the window of ``u_s`` is the base window times
``s``. Two evaluators are provided:

* ``grid``       : every member lives on the potential's grid and ``W+ u_s``
  is computed by ``waveop.w_stationary``. The grid must hold the largest
  member, so the reachable scale range is limited by memory.
* ``multiscale`` : the potential is resolved on its own grid while the
  member is handled at its natural scale. ``Pi(lam) u_s`` comes from the
  exact Fourier trace of ``U1`` at radius ``lam/s``; the scattered field is
  evaluated on the potential grid near the origin and by a cylindrical
  multipole (Graf) expansion on a polar grid further out. A smooth radial
  partition of unity joins the two ``L^p`` integrals. The cost per member
  does not depend on ``s``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, ndimage, special

from .grid import BandWindow, Grid2D, GridFunction, dstar_project, lp_norm, smootherstep
from .operators import build_M
from .potentials import FactoredPotential, Potential, factor_potential
from .waveop import (M_BRANCH, TAIL_LIMIT, DomainError, _angles_for, _solve_checked,
                     _Support, _tail_fraction, build_quadrature, green_from_box, w_stationary)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DilationFamily:
    """Members ``u_n = D*-projection of u0(s_n x)`` with window scaled by ``s_n``.

    ``base`` is a callable ``f(X1, X2)``; ``window`` is the base window.
    Scales are listed in the order the probe visits them, normally
    decreasing so that spectral mass moves toward ``lam = 0``.
    """

    base: object
    window: BandWindow
    scales: tuple

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=float)
        if s.size < 2 or np.any(s <= 0):
            raise ValueError("need at least two positive scales")

    def window_at(self, k: int) -> BandWindow:
        s = float(self.scales[k])
        return BandWindow(self.window.alpha * s, self.window.beta * s)

    def member(self, grid: Grid2D, k: int):
        """Member ``k`` sampled on ``grid`` (and its window)."""
        s = float(self.scales[k])
        win = self.window_at(k)
        win.check(grid)
        X1, X2 = grid.mesh()
        u = GridFunction(grid, np.asarray(self.base(s * X1, s * X2), dtype=complex))
        u = dstar_project(u, win)
        tail = _tail_fraction(u.values)
        if tail > TAIL_LIMIT:
            raise DomainError(f"member {k} (scale {s}) not contained in the grid (tail {tail:.1e})")
        return u, win

    def reference(self, grid: Grid2D) -> GridFunction:
        """``U1``: the base projected onto the base window (scale 1)."""
        self.window.check(grid)
        X1, X2 = grid.mesh()
        u = dstar_project(GridFunction(grid, np.asarray(self.base(X1, X2), dtype=complex)),
                          self.window)
        tail = _tail_fraction(u.values)
        if tail > 1e-8:
            raise DomainError(f"reference grid too small for the base member (tail {tail:.1e})")
        return u


@dataclass
class ProbeResult:
    scales: list
    p_values: list
    ratios: dict  # p -> list of ratios
    quadrature_sizes: list
    method: str = "grid"

    def spread(self, p):
        r = np.asarray(self.ratios[p])
        return float(r.max() / r.min())

    def growth(self, p):
        r = self.ratios[p]
        return float(r[-1] / r[0])

    def monotone(self, p) -> bool:
        r = np.asarray(self.ratios[p])
        return bool(np.all(np.diff(r) > 0))

    def rows(self):
        for p in self.p_values:
            for k, (s, r) in enumerate(zip(self.scales, self.ratios[p])):
                yield k, s, p, r, self.quadrature_sizes[k]


# -- multiscale evaluation -----------------------------------------------------------------

R_INNER = 10.0   # partition of unity: 1 below, ramps to 0 at R_OUTER
R_OUTER = 14.0
MULTIPOLE_PAD = 30


def _sample_reference(U1: GridFunction, x1, x2) -> np.ndarray:
    """``U1`` at arbitrary points (order-5 spline on the symmetric block, 0 outside)."""
    g = U1.grid
    coords = np.vstack([(np.ravel(x1) + g.L) / g.h - 1, (np.ravel(x2) + g.L) / g.h - 1])
    vals = U1.values[1:, 1:]
    out = ndimage.map_coordinates(vals.real, coords, order=5, mode="constant", cval=0.0)
    out = out + 1j * ndimage.map_coordinates(vals.imag, coords, order=5, mode="constant", cval=0.0)
    return out.reshape(np.shape(x1))


def _support_radius(U1: GridFunction, rtol=1e-12) -> float:
    """Smallest ``R`` with ``|U1|^2`` mass outside the disc below ``rtol``."""
    r = U1.grid.radius().ravel()
    m = np.abs(U1.values.ravel()) ** 2
    order = np.argsort(r)
    tail = np.cumsum(m[order][::-1])[::-1] / m.sum()
    idx = np.nonzero(tail < rtol)[0]
    return float(r[order][idx[0]]) if idx.size else float(U1.grid.L)


def _radial_rule(r0, r1, width, order=8):
    """Composite Gauss-Legendre nodes on ``[r0, r1]`` with panel width ``width(r)``."""
    edges = [r0]
    while edges[-1] < r1 - 1e-12:
        edges.append(min(r1, edges[-1] + width(edges[-1])))
    edges = np.asarray(edges)
    t, w = np.polynomial.legendre.leggauss(order)
    hs = np.diff(edges)
    r = (edges[:-1, None] + 0.5 * hs[:, None] * (t[None, :] + 1)).ravel()
    wr = (0.5 * hs[:, None] * w[None, :]).ravel()
    return r, wr


def _partition(r):
    """Weight of the inner (potential-grid) region."""
    return 1.0 - smootherstep((np.asarray(r) - R_INNER) / (R_OUTER - R_INNER))


@dataclass
class _Layout:
    """Quadrature for ``int |f|^p`` split between the potential grid and a polar grid."""

    inner_weight: np.ndarray   # phi(|x|) h^2 on the potential grid
    r: np.ndarray              # outer radii
    wr: np.ndarray             # (1 - phi(r)) r dr
    n_theta: int

    def lp(self, inner, outer, p) -> float:
        """``inner``: values on the potential grid; ``outer``: shape ``(n_theta, r.size)``."""
        s_in = np.sum(self.inner_weight * np.abs(inner) ** p)
        s_out = np.sum(np.abs(outer) ** p * self.wr[None, :]) * (2 * math.pi / self.n_theta)
        return float((s_in + s_out) ** (1.0 / p))


class _MultipoleField:
    """Accumulates ``sum_lam w G0(-lam) F`` outside the source disc.

    ``G0(-lam)(x) = -(i/4) H0^(2)(lam |x|)`` and Graf's addition theorem give
    ``-(i/4) sum_m H_m^(2)(lam r) e^{i m theta} sum_a F_a J_m(lam rho_a) e^{-i m phi_a}``
    for ``r > max rho_a``.
    """

    def __init__(self, fp: FactoredPotential, r: np.ndarray, lam_max: float):
        X = fp.coords
        self.rho = np.hypot(X[:, 0], X[:, 1])
        self.phi = np.arctan2(X[:, 1], X[:, 0])
        self.r = r
        if r.min() <= self.rho.max():
            raise ValueError("multipole evaluation radius inside the source disc")
        self.M = int(math.ceil(lam_max * self.rho.max())) + MULTIPOLE_PAD
        self.acc = np.zeros((2 * self.M + 1, r.size), dtype=complex)

    def add(self, lam, F, weight):
        M = min(self.M, int(math.ceil(lam * self.rho.max())) + MULTIPOLE_PAD)
        m = np.arange(-M, M + 1)
        J = special.jv(m[:, None], lam * self.rho[None, :])
        c = (J * np.exp(-1j * m[:, None] * self.phi[None, :])) @ F
        H = special.hankel2(m[:, None], lam * self.r[None, :])
        blk = (-0.25j * weight) * c[:, None] * H
        if not np.all(np.isfinite(blk)):
            raise FloatingPointError(f"multipole overflow at lam={lam:.3g}")
        self.acc[self.M - M: self.M + M + 1] += blk

    def field(self, n_theta) -> np.ndarray:
        """Values on ``theta_j = 2 pi j / n_theta`` x ``r``; shape ``(n_theta, r.size)``."""
        if n_theta <= 2 * self.M:
            raise ValueError("angle count too small for the multipole order")
        B = np.zeros((n_theta, self.r.size), dtype=complex)
        for i, m in enumerate(range(-self.M, self.M + 1)):
            B[m % n_theta] += self.acc[i]
        return np.fft.ifft(B, axis=0) * n_theta


def multiscale_member_ratio(fp: FactoredPotential, U1: GridFunction, window: BandWindow,
                            s: float, a: float, p_values, branch: str = M_BRANCH,
                            spacing: float | None = None, R_U1: float | None = None):
    """``||W+ u_s||_p / ||u_s||_p`` for ``u_s = U1(s x)`` at each ``p``.

    Returns ``(ratios, n_nodes, rejected)``.
    """
    g = fp.grid
    if R_OUTER + 2 * g.h > g.L:
        raise DomainError("potential grid must extend beyond the partition radius")
    R_U1 = R_U1 or _support_radius(U1)
    win = BandWindow(window.alpha * s, window.beta * s)
    R_max = max(R_U1 / s, R_OUTER + 1.0)
    spacing = spacing or 2 * math.pi / (1.25 * R_max)
    q = build_quadrature(win, a, spacing=spacing)
    lams, wts = q.combined()
    beta = win.beta

    # outer polar layout
    r, wr = _radial_rule(R_INNER, R_max, lambda x: min(0.25 * max(x, 1.0), 1.5 / beta, 1.0 if x < R_OUTER else np.inf))
    wr = wr * r * (1.0 - _partition(r))
    n_theta = 8 * math.ceil((2 * beta * R_max + 2 * (math.ceil(beta * 5) + MULTIPOLE_PAD) + 64) / 8)
    X1g, X2g = g.mesh()
    lay = _Layout(_partition(np.hypot(X1g, X2g)) * g.h * g.h, r, wr, n_theta)
    th = 2 * math.pi * np.arange(n_theta) / n_theta

    # incoming member on both meshes
    u_in = _sample_reference(U1, s * X1g, s * X2g)
    u_out = _sample_reference(U1, s * np.outer(np.cos(th), r), s * np.outer(np.sin(th), r))

    sup = _Support.of(U1)
    X = fp.coords
    R_act = float(np.hypot(X[:, 0], X[:, 1]).max())
    mp = _MultipoleField(fp, r, float(lams.max()) if lams.size else beta)
    S_in = np.zeros((g.n, g.n), dtype=complex)
    rejected = 0
    for lam, wt in zip(lams, wts):
        if wt == 0:
            continue
        K = max(_angles_for(g, lam / s, sup.radius), _angles_for(g, lam, R_act))
        trace = sup.trace(lam / s, K) / (s * s)   # u_s hat on the circle of radius lam
        ang = 2 * math.pi * np.arange(K) / K
        E = np.exp(1j * lam * (np.outer(X[:, 0], np.cos(ang)) + np.outer(X[:, 1], np.sin(ang))))
        piu = E @ (trace / K)
        try:
            y = _solve_checked(build_M(lam, fp, branch).matrix, fp.v * piu)
        except (linalg.LinAlgWarning, linalg.LinAlgError) as exc:
            log.warning("node lam=%.4g rejected: %s", lam, exc)
            rejected += 1
            continue
        f = fp.v * y
        S_in += wt * green_from_box(lam, "incoming", fp, f)
        mp.add(lam, f * fp.weight, wt)
    S_out = mp.field(n_theta)
    ratios = {}
    for p in p_values:
        num = lay.lp(u_in - S_in, u_out - S_out, p)
        den = lay.lp(u_in, u_out, p)
        ratios[p] = num / den
    return ratios, int(lams.size), rejected


# -- driver --------------------------------------------------------------------------------

def lp_growth_probe(V: Potential, p_values, family: DilationFamily, a: float,
                    method: str = "multiscale", reference: Grid2D | None = None,
                    spacing: float | None = None, min_low_nodes: int = 8) -> ProbeResult:
    """Ratios ``||W+ u_n||_p / ||u_n||_p`` over a dilation family.

    Parameters
    ----------
    V : Potential
        Resolved on its own grid; for ``multiscale`` the grid must extend
        beyond radius 14 around the origin.
    p_values : sequence of float
    family : DilationFamily
    a : float
        Cutoff scale of the low/high split.
    method : {"multiscale", "grid"}
    reference : Grid2D, optional
        Grid on which ``U1`` is built (multiscale only); defaults to
        ``Grid2D(512, 64)``.
    spacing : float, optional
        lam-step override (grid method).
    min_low_nodes : int
        The grid method refuses members whose low band gets fewer nodes.
    """
    p_values = [float(p) for p in np.atleast_1d(p_values)]
    ratios = {p: [] for p in p_values}
    sizes = []
    fp = factor_potential(V) if np.any(V.V) else None
    if method == "grid":
        g = V.grid
        for k in range(len(family.scales)):
            u, win = family.member(g, k)
            q = build_quadrature(win, a, spacing=spacing, grid=g)
            if q.low_nodes.size and q.low_nodes.size < min_low_nodes:
                raise DomainError(f"low band under-resolved for scale {family.scales[k]}; refine spacing")
            res = w_stationary(V, u, q, fp=fp)
            if res.rejected:
                log.warning("member %d: %d nodes rejected", k, len(res.rejected))
            for p in p_values:
                ratios[p].append(lp_norm(res.W, p) / lp_norm(u, p))
            sizes.append(q.size)
        return ProbeResult(list(family.scales), p_values, ratios, sizes, "grid")
    if method != "multiscale":
        raise ValueError(f"unknown method {method!r}")
    U1 = family.reference(reference or Grid2D(512, 64.0))
    R_U1 = _support_radius(U1)
    for k, s in enumerate(family.scales):
        if fp is None:
            for p in p_values:
                ratios[p].append(1.0)
            sizes.append(0)
            continue
        r, n, rej = multiscale_member_ratio(fp, U1, family.window, float(s), a, p_values,
                                            R_U1=R_U1)
        if rej:
            log.warning("member %d: %d nodes rejected", k, rej)
        for p in p_values:
            ratios[p].append(r[p])
        sizes.append(n)
        log.info("member %d (s=%g): %s", k, s, {p: round(r[p], 4) for p in p_values})
    return ProbeResult(list(family.scales), p_values, ratios, sizes, "multiscale")
