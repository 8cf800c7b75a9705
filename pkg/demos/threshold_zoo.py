"""Walk an attractive Gaussian well through its first zero-energy crossings.

Deepening V = -g exp(-|x|^2) makes the Birman-Schwinger operator
v G0(lam) v pick up a kernel at lam = 0 at isolated couplings. The scan
finds those couplings, classifies each one and rebuilds the bounded
zero-energy solution so that its far field can be read off.

    python demos/threshold_zoo.py
"""
import logging

import numpy as np

from wave2d.grid import Grid2D
from wave2d.potentials import factor_potential, gaussian
from wave2d.threshold import (asymptotic_coeffs, classify, coupling_scan, reconstruct_resonance,
                              static_set)

logging.basicConfig(level=logging.WARNING)

grid = Grid2D(128, 32.0)
V0 = gaussian(grid, 1.0, 1.0)

print("scanning g in [0.5, 21] ...")
crossings = coupling_scan(V0, (0.5, 21.0), n_steps=22)
for c in crossings:
    print(f"  g* = {c.g_star:.8f}  {c.kind:<10s} multiplicity {c.multiplicity}  gap {c.gap:.1e}")

# A shallow well sits below every crossing: nothing happens at zero energy.
rep = classify(factor_potential(V0.scaled(0.3)))
print(f"\ng = 0.3: {rep.kind}")

# At each crossing, look at what the zero-energy solutions do far away.
# s-waves tend to a constant c, p-waves decay like b.x/|x|^2, eigenfunctions
# decay faster still.
for c in crossings[:3]:
    V = V0.scaled(c.g_star)
    fp = factor_potential(V)
    st = static_set(fp)
    rep = classify(fp, statics=st)
    print(f"\ng* = {c.g_star:.6f}: {rep.kind}, ranks S1/S2/S3 = "
          f"{rep.rank_S1}/{rep.rank_S2}/{rep.rank_S3}, T2 eigenvalues {np.round(rep.eig_T2, 4)}")
    for k in range(rep.rank_S1):
        res = reconstruct_resonance(rep.basis_S1[:, k], fp, st)
        fit = asymptotic_coeffs(res, V)
        b = np.abs(np.asarray(fit.b_moment))
        bf = np.abs(np.asarray(fit.b_fit))
        print(f"  zeta_{k}: {res.klass:<12s} |c| = {abs(fit.c_moment):.2e} (fit {abs(fit.c_fit):.2e}),"
              f" |b| = {b.round(4)} (fit {bf.round(4)})")
