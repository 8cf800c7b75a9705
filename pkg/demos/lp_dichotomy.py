"""Does W+ stay bounded on L^p as inputs concentrate at low energy?

A dilation family u_s(x) = u(s x) pushes the spectral mass of u toward
lam = 0 as s shrinks, which is exactly where zero-energy resonances act.
For a regular well the ratio ||W+ u_s||_p / ||u_s||_p stays flat. At a
p-wave crossing the ratio at p = 4 keeps climbing, while p = 3/2 stays flat.

    python demos/lp_dichotomy.py
"""
import logging

from wave2d.grid import Grid2D
from wave2d.potentials import gaussian
from wave2d.probe import lp_growth_probe
from wave2d.threshold import crossing_oracle
from wave2d.verify import probe_family

logging.basicConfig(level=logging.WARNING)

V0 = gaussian(Grid2D(128, 32.0), 1.0, 1.0)
g_pwave = crossing_oracle(V0)[0]   # first crossing: the l = 1 pair
family = probe_family((1.0, 0.1, 0.01))

for name, g in (("regular, g = 0.3", 0.3), (f"p-wave crossing, g = {g_pwave:.6f}", g_pwave)):
    res = lp_growth_probe(V0.scaled(g), [1.5, 4.0], family, a=0.5)
    print(name)
    for p in (1.5, 4.0):
        cells = "  ".join(f"{r:.3f}" for r in res.ratios[p])
        print(f"  p = {p:<3g} ratios over s = 1, 0.1, 0.01: {cells}   (max/min {res.spread(p):.2f})")
