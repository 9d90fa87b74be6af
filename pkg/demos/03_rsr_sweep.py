"""
How often does a shuffled template still unlock the system?
===========================================================

One fixed shuffle moving exactly P blocks protects every record. The
attacker presents the protected vector as-is; the success rate (RSR) is
the fraction accepted against the mated original.
"""
from pemiu_toolkit import REFERENCE_SPEC, generate, rsr_sweep
from pemiu_toolkit.attack import gaussian_channel

ds = generate(REFERENCE_SPEC)

grid = rsr_sweep(ds, [32, 64, 128], seed=7, threads=4)
for K in (32, 64, 128):
    for P, r in grid.series(K, 0.001):
        print(f"K={K:3d} P={P:2d} RSR@0.1% {r * 100:6.2f}%")

# a noisy reconstruction channel lowers the rates further
noisy = rsr_sweep(ds, [128], channel=gaussian_channel(0.02, seed=1, renormalize=True))
print(noisy.to_csv())
