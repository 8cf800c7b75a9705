"""Potentials on the grid and their factorization ``V = v w`` with
``v = |V|^{1/2}``, ``w = U v``, ``U = sign V`` (``U = +1`` where ``V = 0``)."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Grid2D, GridFunction

log = logging.getLogger(__name__)

ACTIVE_RTOL = 1e-9
TAIL_RTOL = 1e-8


@dataclass(frozen=True)
class Potential:
    """Real potential sampled on a grid.

    Attributes
    ----------
    grid : Grid2D
    V : ndarray
        Real samples, shape ``(n, n)``.
    decay_gamma : float
        Claimed decay exponent (metadata only).
    name : str
    """

    grid: Grid2D
    V: np.ndarray
    decay_gamma: float = np.inf
    name: str = "custom"
    allow_zero: bool = False

    def __post_init__(self):
        V = np.asarray(self.V)
        if np.iscomplexobj(V):
            if np.abs(V.imag).max() > 0:
                raise ValueError("potential must be real")
            V = V.real
        V = np.array(V, dtype=float)
        if V.shape != (self.grid.n, self.grid.n):
            raise ValueError("potential shape does not match grid")
        l1 = np.abs(V).sum()
        if l1 == 0 and not self.allow_zero:
            raise ValueError("zero potential; pass allow_zero=True for the free case")
        if l1 > 0:
            edge = np.zeros_like(V, dtype=bool)
            edge[:2, :] = edge[-2:, :] = edge[:, :2] = edge[:, -2:] = True
            tail = np.abs(V[edge]).sum() / l1
            if tail > TAIL_RTOL:
                raise ValueError(f"potential not contained in grid (edge mass {tail:.2e})")
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.V).sum() * self.grid.h ** 2)

    def scaled(self, c: float) -> "Potential":
        return Potential(self.grid, c * self.V, self.decay_gamma, self.name, self.allow_zero)

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.grid, self.V)


@dataclass(frozen=True)
class FactoredPotential:
    """Factorization restricted to the active node set ``v > ACTIVE_RTOL max v``.

    ``U``, ``v``, ``w`` are 1-D arrays over active nodes; ``rows``/``cols`` are
    their grid indices in row-major order.
    """

    potential: Potential
    U: np.ndarray
    v: np.ndarray
    w: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    @property
    def grid(self) -> Grid2D:
        return self.potential.grid

    @property
    def size(self) -> int:
        return self.v.size

    @property
    def weight(self) -> float:
        return self.grid.h ** 2

    @property
    def coords(self) -> np.ndarray:
        x = self.grid.x
        return np.stack([x[self.rows], x[self.cols]], axis=1)

    def scatter(self, vec) -> np.ndarray:
        """Embed active-set values into a full ``(n, n)`` array."""
        out = np.zeros((self.grid.n, self.grid.n), dtype=np.result_type(vec, float))
        out[self.rows, self.cols] = vec
        return out

    def gather(self, full) -> np.ndarray:
        full = full.values if isinstance(full, GridFunction) else full
        return np.asarray(full)[self.rows, self.cols]

    @cached_property
    def offset_index(self):
        """Flat indices into an offset table of shape ``spans + 1`` for all
        node pairs, ``(|di|, |dj|)`` encoded row-major."""
        si, sj = self.spans
        di = np.abs(self.rows[:, None] - self.rows[None, :]).astype(np.int32)
        dj = np.abs(self.cols[:, None] - self.cols[None, :]).astype(np.int32)
        return di * np.int32(sj + 1) + dj

    @property
    def spans(self):
        return int(np.ptp(self.rows)), int(np.ptp(self.cols))

    def box(self):
        """Index bounds ``(r0, r1, c0, c1)`` of the active set (inclusive-exclusive)."""
        return (int(self.rows.min()), int(self.rows.max()) + 1,
                int(self.cols.min()), int(self.cols.max()) + 1)


def factor_potential(V: Potential, active_rtol: float = ACTIVE_RTOL) -> FactoredPotential:
    """Pointwise ``U = sign V`` (``+1`` at zeros), ``v = |V|^{1/2}``, ``w = U v``."""
    full_v = np.sqrt(np.abs(V.V))
    if full_v.max() == 0:
        raise ValueError("empty operator: v vanishes identically")
    mask = full_v > active_rtol * full_v.max()
    rows, cols = np.nonzero(mask)
    U = np.where(V.V[rows, cols] < 0, -1.0, 1.0)
    v = full_v[rows, cols]
    log.debug("factor_potential: %d active nodes", v.size)
    return FactoredPotential(V, U, v, U * v, rows, cols)


def full_factors(V: Potential):
    """Factorization on the whole grid (``U``, ``v``, ``w`` as ``(n, n)`` arrays)."""
    v = np.sqrt(np.abs(V.V))
    U = np.where(V.V < 0, -1.0, 1.0)
    return U, v, U * v


# -- built-in profiles --------------------------------------------------------------

def gaussian(grid: Grid2D, coupling: float, width: float = 1.0, center=(0.0, 0.0)) -> Potential:
    """``V = -coupling exp(-|x - c|^2 / width^2)`` (attractive for coupling > 0)."""
    X1, X2 = grid.mesh()
    r2 = (X1 - center[0]) ** 2 + (X2 - center[1]) ** 2
    return Potential(grid, -coupling * np.exp(-r2 / width ** 2), np.inf, "gaussian")


def ring(grid: Grid2D, coupling: float, radius: float = 2.0, width: float = 0.7,
         center=(0.0, 0.0)) -> Potential:
    """Attractive radial ring ``-coupling exp(-(|x - c| - radius)^2 / width^2)``."""
    X1, X2 = grid.mesh()
    r = np.hypot(X1 - center[0], X2 - center[1])
    return Potential(grid, -coupling * np.exp(-((r - radius) / width) ** 2), np.inf, "ring")


def ell1_dipole(grid: Grid2D, coupling: float, radius: float = 2.0, width: float = 0.7,
                center=(0.0, 0.0)) -> Potential:
    """Angular ``l = 1`` ring ``-coupling ((x1 - c1) / radius) exp(-(r - radius)^2 / width^2)``.

    Sign-changing; odd under ``x1 -> -x1``.
    """
    X1, X2 = grid.mesh()
    r = np.hypot(X1 - center[0], X2 - center[1])
    prof = (X1 - center[0]) / radius * np.exp(-((r - radius) / width) ** 2)
    return Potential(grid, -coupling * prof, np.inf, "ell1_dipole")


def tabulated(grid: Grid2D, values) -> Potential:
    # complex input reaches Potential unchanged so a nonzero imaginary part is rejected
    return Potential(grid, np.asarray(values), np.inf, "tabulated")
