"""Free resolvent kernel of the 2D Laplacian and its small-energy pieces.

The outgoing kernel is ``H(z) = (i/4) H_0^{(1)}(z)`` evaluated at ``z = lam * |x|``.
Two independent evaluations are provided:

* ``series``   : ascending series in ``z**2/4`` built around the threshold
  function ``g(z)``; used for ``z <= CROSSOVER``.
* ``integral`` : the Laplace-type integral
  ``e^{iz}/(2^{3/2} pi) * int_0^inf e^{-t} t^{-1/2} (t/2 - i z)^{-1/2} dt``
  evaluated with generalized Gauss-Laguerre nodes (alpha = -1/2); used above
  the crossover.

Both branches also return the first and second derivatives in ``z``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_genlaguerre

__all__ = [
    "CROSSOVER",
    "EULER_GAMMA",
    "g_threshold",
    "hankel_h0",
    "resolvent_kernel",
    "static_kernel",
    "square_cell_average",
    "small_arg_remainder",
    "diagonal_value",
]

EULER_GAMMA = float(np.euler_gamma)
CROSSOVER = 2.0
LAGUERRE_NODES = 64
SERIES_RTOL = 1e-16
_TWO_PI = 2.0 * math.pi


def _as_positive(x, name="lambda"):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"{name} must be positive and finite")
    return arr


def g_threshold(lam):
    """Threshold function ``-(1/2pi) log(lam/2) + i/4 - gamma/(2pi)``.

    Accepts scalars or arrays; raises ``ValueError`` for ``lam <= 0``.
    """
    lam = _as_positive(lam)
    out = -np.log(lam / 2.0) / _TWO_PI - EULER_GAMMA / _TWO_PI + 0.25j
    return out[()] if out.ndim == 0 else out


def _series(z, order):
    """Ascending series of H and its z-derivatives up to ``order``."""
    z2 = (z * z) / 4.0
    g = -np.log(z / 2.0) / _TWO_PI - EULER_GAMMA / _TWO_PI + 0.25j
    # J(z) = sum a_k z2^k, S(z) = sum_{k>=1} (-1)^{k+1} H_k z2^k / (k!)^2
    J = np.ones_like(z)
    dJ = np.zeros_like(z)
    d2J = np.zeros_like(z)
    S = np.zeros_like(z)
    dS = np.zeros_like(z)
    d2S = np.zeros_like(z)
    coef = 1.0  # (-1)^k / (k!)^2
    harmonic = 0.0
    k = 0
    while True:
        k += 1
        coef = -coef / (k * k)
        harmonic += 1.0 / k
        t = coef * z2**k  # term of J
        # d/dz z2^k = k z2^k * 2/z ; d2/dz2 z2^k = k(2k-1) z2^k * 2/z^2
        J = J + t
        dJ = dJ + t * (2.0 * k / z)
        d2J = d2J + t * (2.0 * k * (2 * k - 1) / (z * z))
        s = -harmonic * t
        S = S + s
        dS = dS + s * (2.0 * k / z)
        d2S = d2S + s * (2.0 * k * (2 * k - 1) / (z * z))
        if np.all(np.abs(t) * max(harmonic, 1.0) <= SERIES_RTOL * np.maximum(np.abs(J), 1e-300)):
            break
        if k > 200:
            raise RuntimeError("Hankel series failed to converge; argument too large")
    H = g * J - S / _TWO_PI
    if order == 0:
        return H
    dg = -1.0 / (_TWO_PI * z)
    if order == 1:
        return dg * J + g * dJ - dS / _TWO_PI
    d2g = 1.0 / (_TWO_PI * z * z)
    return d2g * J + 2.0 * dg * dJ + g * d2J - d2S / _TWO_PI


def small_arg_remainder(lam):
    """``H(lam) - g(lam) - lam^2 (-g(lam)/4 - 1/(8 pi))`` without cancellation.

    Sums the ascending series from the ``(lam^2/4)^2`` term on, so the
    ``O(g lam^4)`` remainder is resolved even where it falls below the
    rounding level of ``H`` itself.
    """
    z = np.atleast_1d(_as_positive(lam))
    if np.any(z > CROSSOVER):
        raise ValueError("small_arg_remainder is only defined for lam <= CROSSOVER")
    z2 = z * z / 4.0
    g = -np.log(z / 2.0) / _TWO_PI - EULER_GAMMA / _TWO_PI + 0.25j
    coef, harmonic = -1.0, 1.0  # values at k = 1
    tJ = np.zeros_like(z)
    tS = np.zeros_like(z)
    for k in range(2, 200):
        coef = -coef / (k * k)
        harmonic += 1.0 / k
        t = coef * z2**k
        tJ = tJ + t
        tS = tS - harmonic * t
        if np.all(np.abs(t) * harmonic <= SERIES_RTOL * np.abs(tJ)):
            break
    out = g * tJ - tS / _TWO_PI
    return out[0] if np.ndim(lam) == 0 else out


@lru_cache(maxsize=8)
def _laguerre(n):
    t, w = roots_genlaguerre(n, -0.5)
    return t, w


def _integral(z, order, n_nodes=LAGUERRE_NODES, chunk=4096):
    t, w = _laguerre(n_nodes)
    out = np.empty(z.shape, dtype=complex)
    flat_z = z.ravel()
    flat_out = out.ravel()
    pref = 1.0 / (2.0**1.5 * math.pi)
    for start in range(0, flat_z.size, chunk):
        zc = flat_z[start:start + chunk]
        base = t[None, :] / 2.0 - 1j * zc[:, None]
        root = np.sqrt(base)
        F = (w / root).sum(axis=1)
        ph = np.exp(1j * zc) * pref
        if order == 0:
            val = ph * F
        else:
            dF = 0.5j * (w / (root * base)).sum(axis=1)
            if order == 1:
                val = ph * (1j * F + dF)
            else:
                d2F = -0.75 * (w / (root * base * base)).sum(axis=1)
                val = ph * (-F + 2j * dF + d2F)
        flat_out[start:start + chunk] = val
    return out


def hankel_h0(lam, deriv_order=0, method="auto", n_nodes=LAGUERRE_NODES):
    """``H(lam) = (i/4) H_0^{(1)}(lam)`` or its first/second derivative.

    Parameters
    ----------
    lam : float or array
        Positive argument.
    deriv_order : {0, 1, 2}
    method : {"auto", "series", "integral"}
        ``auto`` uses the series for ``lam <= CROSSOVER`` and the
        Gauss-Laguerre integral above it.
    n_nodes : int
        Number of Laguerre nodes for the integral branch.
    """
    if deriv_order not in (0, 1, 2):
        raise ValueError("deriv_order must be 0, 1 or 2")
    z = _as_positive(lam)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if method == "series":
        out = _series(z, deriv_order)
    elif method == "integral":
        out = _integral(z, deriv_order, n_nodes)
    elif method == "auto":
        out = np.empty(z.shape, dtype=complex)
        small = z <= CROSSOVER
        if small.any():
            out[small] = _series(z[small], deriv_order)
        if (~small).any():
            out[~small] = _integral(z[~small], deriv_order, n_nodes)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[0] if scalar else out


def resolvent_kernel(lam, r, branch="outgoing", deriv_order=0):
    """Kernel of ``G_0(+-lam)`` at distance ``r`` (or its lam-derivative).

    ``outgoing`` is ``H(lam r)``; ``incoming`` is its complex conjugate.
    The j-th lam-derivative is ``r**j * H^{(j)}(lam r)``.
    """
    lam = float(_as_positive(lam))
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r = 0 is the log singularity; use a cell-averaged value")
    val = hankel_h0(lam * r, deriv_order) * r**deriv_order
    if branch == "incoming":
        val = np.conj(val)
    elif branch != "outgoing":
        raise ValueError(f"unknown branch {branch!r}")
    return val


def static_kernel(kind, r):
    """Pointwise kernels of N0, G1 and G2.

    N0: ``-(1/2pi) log r``; G1: ``r**2 / 4``; G2: ``(1/8pi) r**2 log(e/r)``.
    """
    r = np.asarray(r, dtype=float)
    if kind == "N0":
        if np.any(r <= 0):
            raise ValueError("N0 kernel is singular at r = 0")
        return -np.log(r) / _TWO_PI
    if kind == "G1":
        return r * r / 4.0
    if kind == "G2":
        with np.errstate(divide="ignore", invalid="ignore"):
            val = r * r * (1.0 - np.log(r)) / (8.0 * math.pi)
        return np.where(r > 0, val, 0.0)
    raise ValueError(f"unknown static kernel {kind!r}")


def square_cell_average(f, h, n=32):
    """Average of ``f(|z|)`` over the square ``[-h/2, h/2]^2``.

    Uses the 8-fold symmetry (triangle ``0 <= theta <= pi/4``) in polar
    coordinates with ``r = R(theta) s^2`` to tame logarithmic endpoints.
    ``f`` must accept an array of radii and may return a trailing batch axis
    (shape ``(nr, ...)``).
    """
    s, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    theta = 0.25 * math.pi * s
    wt = 0.25 * math.pi * ws
    R = 0.5 * h / np.cos(theta)
    # r = R s^2, dr = 2 R s ds; integrand f(r) r dr
    rr = (R[:, None] * s[None, :] ** 2).ravel()
    jac = (2.0 * R[:, None] ** 2 * s[None, :] ** 3 * ws[None, :] * wt[:, None]).ravel()
    vals = np.asarray(f(rr))
    integral = np.tensordot(jac, vals, axes=(0, 0))
    return 8.0 * integral / (h * h)


def diagonal_value(kind, h, lam=None, deriv_order=0, branch="outgoing", n=32):
    """Value assigned to the zero lattice offset of a kernel.

    Each kernel is split as ``a(r) log r + b(r)`` with ``a``, ``b`` smooth;
    the diagonal is ``b(0) + cell average of a(r) log r``. The rule is linear
    in the kernel, so the small-energy expansion of the resolvent kernel is
    inherited exactly by its diagonal, and smooth kernels (``G1``) keep their
    point value.
    """
    if kind == "N0":
        return square_cell_average(lambda r: -np.log(r) / _TWO_PI, h, n)
    if kind == "G1":
        return 0.0
    if kind == "G2":
        return square_cell_average(lambda r: -r * r * np.log(r) / (8.0 * math.pi), h, n)
    if kind != "G0":
        raise ValueError(f"unknown kernel {kind!r}")
    lam = float(_as_positive(lam))
    # log part: -(1/2pi) log r * d^j/dlam^j J0(lam r), J0 = 4 Im H
    j = deriv_order
    log_part = square_cell_average(
        lambda r: -np.log(r) * 4.0 * np.imag(hankel_h0(lam * r, j)) * r**j / _TWO_PI, h, n)
    if j == 0:
        b0 = g_threshold(lam)
    elif j == 1:
        b0 = -1.0 / (_TWO_PI * lam)
    else:
        b0 = 1.0 / (_TWO_PI * lam * lam)
    val = complex(b0 + log_part)
    return np.conj(val) if branch == "incoming" else val
