"""Lens transform: trapped cubic NLS on (-pi/4, pi/4) against free cubic NLS in d = 2.

Run: python demos/lens_scattering.py   (about half a minute)
"""
import math

import numpy as np

from hermite_nls import hermite as hm
from hermite_nls import lens

c = np.zeros(hm.n_modes(2, 80), complex)
c[:6] = [1.0, 0.4j, 0.2, 0.6, 0.1, -0.2]
u0 = hm.SpectralField(2, 80, c)
spec = lens.lens_spec(2)

reps, slope = lens.equivalence_convergence(u0, spec, math.pi / 8, [2e-3, 1e-3, 5e-4],
                                           n_points=192, half_width=24, n_checkpoints=2)
for r in reps:
    print(f"dt={r.dt:.1e}  max residual {r.residual_max:.2e}")
print(f"fitted order {slope:.3f}")

small = u0.resized(24) * 0.5
rep = lens.scattering_extract(small, spec, dt=2e-3, sobolev_s=0.5, n_points=10)
print("\n|W(t_k+1) - W(t_k)| along t -> infinity:")
for t, d in zip(rep.t_grid[1:], rep.differences):
    print(f"t={t:10.2f}  {d:.3e}")
print(f"scattering state L^2 norm {np.linalg.norm(rep.f_extrapolated.coeffs):.5f}")
