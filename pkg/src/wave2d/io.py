"""File formats and run configuration.

Formats (all little-endian, UTF-8 text):

GridFunction CSV
    Two comment lines ``# n=<n>`` and ``# L=<L>``, a header ``x,y,re,im`` and
    one row per node in row-major order (first index = x). Example for
    ``n = 2, L = 1``::

        # n=2
        # L=1.0
        x,y,re,im
        -1.0,-1.0,0.5,0.0
        -1.0,0.0,0.25,0.0
        0.0,-1.0,0.25,0.0
        0.0,0.0,1.0,-0.5

GridFunction binary
    8 bytes magic ``b"GF2D\\x00\\x01\\x00\\x00"``, ``int64 n``, ``float64 L``,
    then ``n*n`` complex128 values row-major (16 bytes each, real part first).

Operator dump
    ``int64 rows``, ``int64 cols``, then complex128 row-major (see
    ``operators.dump_operator``).

Reports are JSON. Complex numbers are written as ``[re, im]`` pairs.
Sweeps (crossings, probe ratios) are CSV with a fixed header.
"""
from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import BandWindow, Grid2D, GridFunction
from .potentials import Potential, ell1_dipole, gaussian, ring, tabulated

log = logging.getLogger(__name__)

MAGIC = b"GF2D\x00\x01\x00\x00"
PROFILES = ("gaussian", "ring", "ell1_dipole", "tabulated-file")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


# -- grid functions -------------------------------------------------------------------------

def write_grid_csv(u: GridFunction, path) -> None:
    g = u.grid
    X1, X2 = g.mesh()
    vals = np.asarray(u.values, dtype=complex)
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={g.n}\n# L={g.L!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "re", "im"])
        for x, y, z in zip(X1.ravel(), X2.ravel(), vals.ravel()):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z.real)), repr(float(z.imag))])


def read_grid_csv(path) -> GridFunction:
    with open(path) as fh:
        head = [fh.readline(), fh.readline()]
        try:
            n = int(head[0].split("=")[1])
            L = float(head[1].split("=")[1])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"{path}: missing '# n=' / '# L=' header") from exc
        rows = list(csv.DictReader(fh))
    if len(rows) != n * n:
        raise ConfigError(f"{path}: expected {n * n} rows, found {len(rows)}")
    vals = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows]).reshape(n, n)
    return GridFunction(Grid2D(n, L), vals)


def write_grid_binary(u: GridFunction, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        np.array([u.grid.n], dtype="<i8").tofile(fh)
        np.array([u.grid.L], dtype="<f8").tofile(fh)
        np.ascontiguousarray(u.values, dtype="<c16").tofile(fh)


def read_grid_binary(path) -> GridFunction:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ConfigError(f"{path}: not a grid-function dump")
        n = int(np.fromfile(fh, "<i8", 1)[0])
        L = float(np.fromfile(fh, "<f8", 1)[0])
        vals = np.fromfile(fh, "<c16")
    if vals.size != n * n:
        raise ConfigError(f"{path}: truncated ({vals.size} of {n * n} values)")
    return GridFunction(Grid2D(n, L), vals.reshape(n, n))


def read_grid_function(path) -> GridFunction:
    """Binary if the magic matches, CSV otherwise."""
    with open(path, "rb") as fh:
        binary = fh.read(8) == MAGIC
    return read_grid_binary(path) if binary else read_grid_csv(path)


# -- JSON helpers ---------------------------------------------------------------------------

def _plain(x):
    """Convert numpy/complex values into JSON-compatible structures."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def threshold_report_dict(rep, resonances=None) -> dict:
    """JSON schema of a ``ThresholdReport``.

    Keys: ``kind``; ``rank_S1``/``rank_S2``/``rank_S3``; ``eig_T2`` (list of
    ``-kappa^2``); ``singular_values`` and ``gaps`` per classification
    stage; ``c0`` (the constant ``<T0 zeta, v>/||v||^2`` per S1 basis
    vector); ``resonances`` (``c``, ``b``, ``class`` per S1 basis vector, when
    ``resonances`` are passed in); ``warnings``.
    """
    res = [{"c": r.c, "b": list(r.b), "class": r.klass} for r in (resonances or [])]
    return _plain({
        "kind": rep.kind,
        "rank_S1": rep.rank_S1,
        "rank_S2": rep.rank_S2,
        "rank_S3": rep.rank_S3,
        "eig_T2": np.asarray(rep.eig_T2, dtype=float),
        "singular_values": {k: np.asarray(v, dtype=float)[:12] for k, v in rep.singular_values.items()},
        "gaps": rep.gaps,
        "c0": list(rep.resonance_constants),
        "resonances": res,
        "warnings": list(rep.warnings),
    })


def expansion_report_dict(expansion, fit=None, residuals=None) -> dict:
    """Term list (profile id, rank, HS norm), remainder order and slope,
    and oracle residuals per ``lam``."""
    out = {
        "kind": expansion.kind,
        "terms": expansion.describe(),
        "remainder_order": list(expansion.remainder_order),
        "sandwich": expansion.sandwich,
    }
    if fit is not None:
        out["remainder_slope"] = fit.slope
        out["residuals"] = [{"lam": float(l), "residual": float(r)}
                            for l, r in zip(fit.lams, fit.residuals)]
    elif residuals is not None:
        out["residuals"] = residuals
    return _plain(out)


# -- sweeps ---------------------------------------------------------------------------------

CROSSING_HEADER = ["g_star", "kind", "rank_S1", "gap"]
PROBE_HEADER = ["family_index", "scale", "p", "ratio", "quadrature_id"]


def crossings_csv(crossings) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CROSSING_HEADER)
    for c in crossings:
        w.writerow([f"{c.g_star:.12g}", c.kind, c.rank_S1, f"{c.gap:.6g}"])
    return buf.getvalue()


def probe_csv(result) -> str:
    """``quadrature_id`` is ``q<k>-<node count>`` for member ``k``."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROBE_HEADER)
    for k, s, p, r, size in result.rows():
        w.writerow([k, f"{s:.12g}", f"{p:g}", f"{r:.12g}", f"q{k}-{size}"])
    return buf.getvalue()


# -- run configuration ----------------------------------------------------------------------

@dataclass
class PotentialSpec:
    profile: str = "gaussian"
    coupling: float = 1.0
    center: tuple = (0.0, 0.0)
    width: float = 1.0
    radius: float = 2.0
    file: str | None = None


@dataclass
class GridSpec:
    n: int = 128
    L: float = 32.0


@dataclass
class RunConfig:
    """Parsed run configuration (JSON).

    ``band`` is the input window ``[alpha, beta]``; ``tolerances`` holds
    ``classify`` (relative rank threshold) and ``cross_error``; ``options``
    carries command-specific keys (``g_range``, ``n_steps``, ``input``,
    ``mode``, ``t_list``, ``probe``, ``scales``, ``p_values``, ``suite``).
    """

    potential: PotentialSpec = field(default_factory=PotentialSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    a: float = 0.5
    band: tuple | None = None
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    options: dict = field(default_factory=dict)

    # parsing

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {"potential", "grid", "a", "band", "tolerances", "seed", "options"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        try:
            pot = PotentialSpec(**d.get("potential", {}))
            grd = GridSpec(**d.get("grid", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        pot.center = tuple(float(c) for c in pot.center)
        band = d.get("band")
        cfg = cls(pot, grd, float(d.get("a", 0.5)),
                  None if band is None else tuple(float(b) for b in band),
                  dict(d.get("tolerances", {})), int(d.get("seed", 0)),
                  dict(d.get("options", {})))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["potential"]["center"] = list(self.potential.center)
        if self.band is not None:
            d["band"] = list(self.band)
        return d

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def dump(self, path) -> None:
        dump_json(self.to_dict(), path)

    # validation

    def validate(self) -> None:
        p, g = self.potential, self.grid
        if p.profile not in PROFILES:
            raise ConfigError(f"unknown profile {p.profile!r}; expected one of {PROFILES}")
        if not isinstance(g.n, int) or isinstance(g.n, bool):
            raise ConfigError("grid.n must be an integer")
        try:
            grid = Grid2D(g.n, float(g.L))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc
        if not math.isfinite(grid.L):
            raise ConfigError("grid.L must be finite")
        for name, val in (("coupling", p.coupling), ("width", p.width), ("radius", p.radius)):
            if not math.isfinite(float(val)):
                raise ConfigError(f"potential.{name} must be finite")
        if p.width <= 0 or p.radius <= 0:
            raise ConfigError("potential width and radius must be positive")
        if len(p.center) != 2:
            raise ConfigError("potential.center must have two entries")
        if p.profile == "tabulated-file":
            if not p.file:
                raise ConfigError("tabulated-file profile needs potential.file")
            if not os.path.exists(p.file):
                raise ConfigError(f"potential file not found: {p.file}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError("cutoff a must be positive")
        if self.band is not None:
            if len(self.band) != 2:
                raise ConfigError("band must be [alpha, beta]")
            try:
                BandWindow(*self.band).check(grid)
            except ValueError as exc:
                raise ConfigError(f"band: {exc}") from exc

    # builders

    def make_grid(self) -> Grid2D:
        return Grid2D(self.grid.n, float(self.grid.L))

    def make_potential(self, grid: Grid2D | None = None) -> Potential:
        grid = grid or self.make_grid()
        p = self.potential
        try:
            if p.profile == "gaussian":
                if p.coupling == 0:
                    return Potential(grid, np.zeros((grid.n, grid.n)), allow_zero=True, name="zero")
                return gaussian(grid, p.coupling, p.width, p.center)
            if p.profile == "ring":
                return ring(grid, p.coupling, p.radius, p.width, p.center)
            if p.profile == "ell1_dipole":
                return ell1_dipole(grid, p.coupling, p.radius, p.width, p.center)
            vals = _load_table(p.file, grid)
            return tabulated(grid, p.coupling * vals)
        except OSError as exc:
            raise ConfigError(f"cannot read potential file: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"potential: {exc}") from exc

    def window(self) -> BandWindow | None:
        return None if self.band is None else BandWindow(*self.band)


def _load_table(path, grid: Grid2D) -> np.ndarray:
    if str(path).endswith(".npy"):
        vals = np.load(path)
    else:
        gf = read_grid_function(path)
        if gf.grid.n != grid.n or abs(gf.grid.L - grid.L) > 1e-12 * grid.L:
            raise ConfigError("tabulated potential grid does not match the configured grid")
        vals = gf.values
    vals = np.asarray(vals)
    if vals.shape != (grid.n, grid.n):
        raise ConfigError(f"tabulated potential has shape {vals.shape}, expected {(grid.n, grid.n)}")
    if np.iscomplexobj(vals):
        if np.abs(vals.imag).max() > 0:
            raise ConfigError("tabulated potential must be real")
        vals = vals.real
    return vals
