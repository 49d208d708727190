"""Random data on Hermite clusters and the Gaussian tail of its space-time norm.

Run: python demos/random_tails.py
"""
import math

import numpy as np

from hermite_nls import sampling as sa
from hermite_nls import strichartz as sz

g = sa.CoefficientProfile.cluster_flat(2, 10, 1.5)
print(f"profile: {g.kind}, L^2 norm {g.norm(0):.4f}, squeezing constant {g.squeezing:.3f}")

for k in (2, 4, 8):
    est = sz.khinchin_estimate(np.abs(g.base.coeffs), k, "gaussian", 50_000, seed=1)
    print(f"k={k:2d}: moment ratio {est.ratio:.4f} +- {est.se:.4f} "
          f"(closed form {sz.gaussian_khinchin_ratio(k):.4f})")

spec = sz.MixedNormSpec(4.0, 4.0)
tc = sz.tail_curve(g, "gaussian", spec, trials=4000, seed=0)
print(f"\nlog P(norm > K) ~ {tc.slope:.3f} K^2  (R^2 {tc.r2:.3f})")
for K, p, lo, hi in tc.rows()[::6]:
    print(f"K={K:6.3f}  P={p:.4f}  [{lo:.4f}, {hi:.4f}]")

b = sz.tail_curve(g.scaled(2.0), "gaussian", spec, K=2 * tc.K, trials=4000, seed=1)
print(f"\ndoubling the profile rescales the slope by {b.slope / tc.slope:.3f} (ideal {1 / 4})")
print(f"sqrt(2) check of the k=2 ratio: {1 / math.sqrt(2):.4f}")
