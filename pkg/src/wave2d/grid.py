"""Uniform Cartesian grid on [-L, L)^2, unitary Fourier transform and the
spectral-density operator Pi(lam).

Nodes are ``x_i = -L + i h`` with ``h = 2L/n``; the origin is node ``n/2`` so the
lattice is invariant under the dihedral group of the square (modulo the
periodic wrap of the first row/column). The Fourier transform is normalized as
``u_hat(xi) = (1/2pi) int e^{-i x.xi} u(x) dx`` and is sampled on the dual grid
``xi_k = (k - n/2) pi / L``, stored centered.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

__all__ = [
    "Grid2D",
    "GridFunction",
    "BandWindow",
    "smootherstep",
    "smooth_step",
    "chi_cutoff",
    "fourier_forward",
    "fourier_inverse",
    "apply_multiplier",
    "lp_norm",
    "l2_inner",
    "circle_trace",
    "circle_trace_exact",
    "synthesize_plane_waves",
    "pi_lambda",
    "dstar_project",
    "band_profile",
    "laplacian",
    "rotate90",
]


@dataclass(frozen=True)
class Grid2D:
    """Square grid with ``n`` samples per axis over ``[-L, L)``."""

    n: int
    L: float

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two, n >= 16")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dxi(self) -> float:
        return math.pi / self.L

    @property
    def nyquist(self) -> float:
        return math.pi / self.h

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @property
    def xi(self) -> np.ndarray:
        return self.dxi * (np.arange(self.n) - self.n // 2)

    def mesh(self):
        """Return ``(X1, X2)`` with ``X1[i, j] = x_i``, ``X2[i, j] = x_j``."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    def radius(self) -> np.ndarray:
        X1, X2 = self.mesh()
        return np.hypot(X1, X2)

    def freq_mesh(self):
        return np.meshgrid(self.xi, self.xi, indexing="ij")

    def freq_radius(self) -> np.ndarray:
        K1, K2 = self.freq_mesh()
        return np.hypot(K1, K2)

    def zeros(self, domain="position") -> "GridFunction":
        return GridFunction(self, np.zeros((self.n, self.n), dtype=complex), domain)

    def sample(self, f, domain="position") -> "GridFunction":
        """Evaluate ``f(x1, x2)`` on the (position or frequency) mesh."""
        A, B = self.mesh() if domain == "position" else self.freq_mesh()
        return GridFunction(self, np.asarray(f(A, B), dtype=complex), domain)


@dataclass(frozen=True)
class GridFunction:
    """Complex samples on a grid, in position or frequency domain.

    Values are copied and made read-only on construction.
    """

    grid: Grid2D
    values: np.ndarray
    domain: str = "position"

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex, copy=True)
        n = self.grid.n
        if vals.shape != (n, n):
            raise ValueError(f"values must have shape {(n, n)}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite values")
        if self.domain not in ("position", "frequency"):
            raise ValueError("domain must be 'position' or 'frequency'")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def cell(self) -> float:
        """Quadrature weight of one node."""
        d = self.grid.h if self.domain == "position" else self.grid.dxi
        return d * d

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.domain)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__

    def conj(self):
        return self.with_values(np.conj(self.values))

    def norm(self, p=2.0):
        return lp_norm(self, p)


def _vals(x):
    return x.values if isinstance(x, GridFunction) else x


@dataclass(frozen=True)
class BandWindow:
    """Radial spectral window ``0 < alpha < beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha < self.beta:
            raise ValueError("need 0 < alpha < beta")

    def check(self, grid: Grid2D):
        if self.beta > grid.nyquist:
            raise ValueError(f"beta={self.beta} exceeds Nyquist {grid.nyquist:.4g}")


# -- cutoffs -----------------------------------------------------------------

def smootherstep(t):
    """C^2 ramp ``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smooth_step(t):
    """C-infinity ramp ``f(t) / (f(t) + f(1 - t))`` with ``f(t) = exp(-1/t)``.

    Equals 0 for ``t <= 0`` and 1 for ``t >= 1``; windows built from it are
    compactly supported and smooth, so band-limited inputs decay faster than
    any power in space.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def chi_cutoff(lam, a, side="LeQ"):
    """Smooth cutoff ``chi(lam/a)`` (``LeQ``) or its complement (``Gt``).

    ``chi = 1`` for ``|t| <= 1/2``, ``0`` for ``|t| >= 1``, with a C^2
    transition.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    t = np.abs(np.asarray(lam, dtype=float)) / a
    low = 1.0 - smootherstep(2.0 * t - 1.0)
    if side == "LeQ":
        out = low
    elif side == "Gt":
        out = 1.0 - low
    else:
        raise ValueError("side must be 'LeQ' or 'Gt'")
    return out[()] if out.ndim == 0 else out


def band_profile(rho, window: BandWindow):
    """Radial window: 1 on [2 alpha, beta/2], 0 outside (alpha, beta).

    When the plateau is empty the two ramps meet at the midpoint.
    """
    a, b = window.alpha, window.beta
    mid = 0.5 * (a + b)
    a1 = min(2.0 * a, mid)
    b1 = max(0.5 * b, mid)
    rho = np.asarray(rho, dtype=float)
    up = smootherstep((rho - a) / (a1 - a))
    down = 1.0 - smootherstep((rho - b1) / (b - b1))
    return up * down


# -- Fourier transform ---------------------------------------------------------

def _phase(grid: Grid2D):
    # e^{i L xi} on the centered dual grid is (-1)^(k - n/2)
    s = np.where((np.arange(grid.n) - grid.n // 2) % 2 == 0, 1.0, -1.0)
    return np.outer(s, s)


def fourier_forward(u: GridFunction) -> GridFunction:
    """Unitary transform ``(1/2pi) int e^{-ix.xi} u(x) dx`` on the dual grid."""
    if u.domain != "position":
        raise ValueError("fourier_forward expects a position-domain function")
    g = u.grid
    F = np.fft.fftshift(np.fft.fft2(u.values))
    return GridFunction(g, F * _phase(g) * (g.h * g.h / (2.0 * math.pi)), "frequency")


def fourier_inverse(uh: GridFunction) -> GridFunction:
    if uh.domain != "frequency":
        raise ValueError("fourier_inverse expects a frequency-domain function")
    g = uh.grid
    F = np.fft.ifftshift(uh.values * _phase(g))
    return GridFunction(g, np.fft.ifft2(F) * (2.0 * math.pi / (g.h * g.h)), "position")


def apply_multiplier(u: GridFunction, f) -> GridFunction:
    """Fourier multiplier ``f(|D|) u`` with ``f`` a function of ``|xi|``."""
    uh = fourier_forward(u)
    return fourier_inverse(uh.with_values(uh.values * f(u.grid.freq_radius())))


# -- norms -----------------------------------------------------------------------

def lp_norm(u: GridFunction, p=2.0) -> float:
    """``(sum |u|^p h^2)^(1/p)``; ``p = inf`` gives the max norm."""
    p = float(p)
    if not p > 1.0:
        raise ValueError("p must exceed 1")
    a = np.abs(u.values)
    if math.isinf(p):
        return float(a.max())
    m = a.max()
    if m == 0:
        return 0.0
    # scale to avoid overflow for large p
    return float(m * (np.sum((a / m) ** p) * u.cell) ** (1.0 / p))


def l2_inner(u: GridFunction, w: GridFunction, conjugate=True) -> complex:
    a = np.conj(u.values) if conjugate else u.values
    return complex(np.sum(a * w.values) * u.cell)


# -- circle traces and Pi(lambda) ---------------------------------------------------

def _angles(n_angles):
    th = 2.0 * math.pi * np.arange(n_angles) / n_angles
    return np.cos(th), np.sin(th)


def _check_lambda(grid: Grid2D, lam):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if lam > grid.nyquist:
        raise ValueError(f"lambda={lam} beyond Nyquist {grid.nyquist:.4g}")


def circle_trace_exact(u: GridFunction, lam: float, n_angles: int = 128) -> np.ndarray:
    """``u_hat(lam w_k)`` by direct (separable) evaluation of the discrete
    Fourier sum at the off-grid points, ``O(n_angles n^2)``.
    """
    if u.domain != "position":
        raise ValueError("circle_trace_exact expects a position-domain function")
    g = u.grid
    _check_lambda(g, lam)
    c, s = _angles(n_angles)
    x = g.x
    E1 = np.exp(-1j * lam * np.outer(c, x))
    E2 = np.exp(-1j * lam * np.outer(s, x))
    t = np.einsum("kj,kj->k", E1 @ u.values, E2)
    return t * (g.h * g.h / (2.0 * math.pi))


def circle_trace(u_hat: GridFunction, lam: float, n_angles: int = 128,
                 oversample: int = 2) -> np.ndarray:
    """``u_hat(lam w_k)`` by bicubic interpolation on the dual grid.

    The dual grid is refined ``oversample`` times by zero padding in position
    space before interpolating, which keeps the cubic error small for smooth,
    decaying ``u``.
    """
    if u_hat.domain != "frequency":
        raise ValueError("circle_trace expects a frequency-domain function")
    if n_angles < 16:
        raise ValueError("n_angles must be >= 16")
    g = u_hat.grid
    _check_lambda(g, lam)
    if oversample > 1:
        u = fourier_inverse(u_hat)
        big = Grid2D(g.n * oversample, g.L * oversample)
        pad = (big.n - g.n) // 2
        vals = np.zeros((big.n, big.n), dtype=complex)
        vals[pad:pad + g.n, pad:pad + g.n] = u.values
        uh_vals = fourier_forward(GridFunction(big, vals)).values
        gg = big
    else:
        uh_vals, gg = u_hat.values, g
    c, s = _angles(n_angles)
    # fractional index of xi: k = xi / dxi + n/2
    i1 = lam * c / gg.dxi + gg.n // 2
    i2 = lam * s / gg.dxi + gg.n // 2
    coords = np.vstack([i1, i2])
    re = ndimage.map_coordinates(uh_vals.real, coords, order=3, mode="constant")
    im = ndimage.map_coordinates(uh_vals.imag, coords, order=3, mode="constant")
    return re + 1j * im


def synthesize_plane_waves(trace: np.ndarray, lam: float, x1: np.ndarray,
                           x2: np.ndarray) -> np.ndarray:
    """Trapezoid rule for ``(1/2pi) int e^{i lam w.x} F(w) dw`` on the tensor
    product ``x1 x x2`` given ``F`` at equispaced angles."""
    K = trace.size
    c, s = _angles(K)
    A = np.exp(1j * lam * np.outer(x1, c)) * (trace / K)
    B = np.exp(1j * lam * np.outer(x2, s))
    return A @ B.T


def default_angles(grid: Grid2D, lam: float, extent: float | None = None) -> int:
    """Angles needed for the trapezoid rule to resolve ``e^{i lam w.x}`` out
    to radius ``extent`` (default: the grid diagonal)."""
    R = extent if extent is not None else grid.L * math.sqrt(2.0)
    k = int(math.ceil(lam * 2.0 * R + 32))
    # multiple of 8 keeps the angle set invariant under the lattice symmetries
    return max(128, 8 * math.ceil(k / 8))


def pi_lambda(u: GridFunction, lam: float, n_angles: int | None = None) -> GridFunction:
    """Spectral density ``Pi(lam) u(x) = (1/2pi) int e^{i lam w.x} u_hat(lam w) dw``.

    The circle trace is evaluated exactly (non-uniform DFT); the angular
    integral uses the trapezoid rule with enough nodes for the whole grid.
    """
    g = u.grid
    K = n_angles or default_angles(g, lam)
    t = circle_trace_exact(u, lam, K)
    return GridFunction(g, synthesize_plane_waves(t, lam, g.x, g.x))


def dstar_project(u: GridFunction, window: BandWindow) -> GridFunction:
    """Band-limit ``u`` radially to ``(alpha, beta)`` with a smooth window."""
    window.check(u.grid)
    return apply_multiplier(u, lambda r: band_profile(r, window))


# -- finite-difference tools -----------------------------------------------------------

def laplacian(u: GridFunction, method="fd") -> GridFunction:
    """Periodic 5-point (``fd``) or spectral Laplacian."""
    if method == "spectral":
        return apply_multiplier(u, lambda r: -(r * r))
    if method != "fd":
        raise ValueError("method must be 'fd' or 'spectral'")
    a = u.values
    h2 = u.grid.h ** 2
    lap = (np.roll(a, 1, 0) + np.roll(a, -1, 0) + np.roll(a, 1, 1) + np.roll(a, -1, 1) - 4 * a) / h2
    return u.with_values(lap)


def rotate90(values: np.ndarray) -> np.ndarray:
    """Samples of ``u(R^{-1} x)`` for ``R`` the rotation by +pi/2 about the origin."""
    n = values.shape[0]
    idx = (-np.arange(n)) % n
    # (R^{-1} x) = (x2, -x1)
    return values[:, idx].T.copy()
