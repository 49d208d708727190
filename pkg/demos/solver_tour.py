"""Cubic NLS with a harmonic trap: conservation, convergence order, Picard iteration.

Run: python demos/solver_tour.py
"""
import numpy as np

from hermite_nls import hermite as hm
from hermite_nls import nls
from hermite_nls import sampling as sa

L = 16
c = np.zeros(hm.n_modes(2, L), complex)
c[hm.mode_index((0, 0))] = 0.8
c[hm.mode_index((1, 0))] = 0.4 + 0.2j
c[hm.mode_index((0, 2))] = 0.3j
u0 = hm.SpectralField(2, L, c)
spec = nls.EquationSpec.cubic(2)

tr = nls.solve(u0, spec, 1.0, 1e-3)
print("t      mass          energy")
for t, m, e, *_ in tr.rows()[::250]:
    print(f"{t:5.2f}  {m:.12f}  {e:.12f}")
print(f"relative drift: mass {tr.drift('mass'):.1e}, energy {tr.drift('energy'):.1e}")

errs, slope = nls.convergence_study(u0, spec, 0.5, [0.02, 0.01, 0.005])
print("\nstep errors", ", ".join(f"{e:.2e}" for e in errs), f"-> observed order {slope:.3f}")

# random rough data, small enough for the fixed-point map to contract on [0, 0.05]
g = sa.CoefficientProfile.cluster_flat(2, 12, 1.5)
rep = nls.picard_iterate(sa.sample(g, "gaussian", 3, 0) * 2.0, spec, 0.05, 8, s=0.5)
print("\nPicard difference ratios", np.round(rep.ratios, 3))
