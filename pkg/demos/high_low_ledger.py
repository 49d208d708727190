"""Window-by-window high-low split for rough random data (d = 2, s = 1/2).

Run: python demos/high_low_ledger.py   (about a minute)
"""
from hermite_nls import globalize as gl
from hermite_nls import sampling as sa

g = sa.CoefficientProfile.cluster_flat(2, 64, 0.8, 0.5, 0.5)
for N in (4, 8, 16):
    led = gl.bourgain_run(g, "gaussian", 0, 0.5, 2, N, 0.25, 5e-3, trials=8)
    print(f"N={N:2d}: {led.n_windows} windows of length {led.T:.3f}, "
          f"median increment {led.median_increment:.2e}, bounds ok {bool(led.bound_ok.all())}")

print("\nledger for N = 16, trial 0")
print(" ".join(f"{c:>10s}" for c in gl.LEDGER_COLUMNS))
for row in led.rows(0):
    print(" ".join(f"{v:10.4g}" if isinstance(v, float) else f"{str(v):>10s}" for v in row))

print(f"\nenergy growth exponent c_s: d=2 {gl.growth_exponent(0.5, 2)}, d=3 {gl.growth_exponent(0.5, 3):.3f}")
