"""
Smoothed Lie-algebra white noise on a torus
===========================================

Draw su(2)-valued white noise, smooth it with the dyadic low-pass chi_j and
check two facts numerically: the pointwise variance of W^(j) equals
sum_k chi_j(k)^2 / L^2, and the Littlewood-Paley blocks of an indicator
decay like 2^(-j/2).
"""

import numpy as np

from axialym.spectral import (TorusGrid, besov_profile, build_partition, rasterize_indicator,
                              sample_noise_batch, smooth_field, sample_noise)

grid = TorusGrid(L=4.0, N=128)
print(f"grid h = {grid.h:.4f}, j_max = {grid.j_max}")

# One sample, smoothed at j = 3. The field is real with three su(2) channels.
W = sample_noise(seed=1, grid=grid, n=2)
field = smooth_field(W, 3)
print("smoothed field shape", field.shape, "range", field.min().round(3), field.max().round(3))

# Pointwise variance across seeds against the spectral sum.
j = 3
part = build_partition(grid)
vals = sample_noise_batch(range(400), grid, band=j)
m = vals.shape[-1]
w = part.smoothing_weights(j, m)
# value at the origin is the real part of the coefficient sum
at_origin = np.real(np.sum(vals * w * grid.rep_weight[:m], axis=-1)) / grid.L
exact = np.sum(grid.rep_weight[:m] * w**2) / grid.L**2
print(f"variance at origin: empirical {at_origin.var():.3f}, exact {exact:.3f}")

# Block norms of a unit square: slope -1/2 in log2 against j.
square = rasterize_indicator(grid, (1.0, 2.0 - 1e-9), (1.0, 2.0 - 1e-9))
prof = besov_profile(square, grid)
js = np.arange(-1, grid.j_max + 1)
mid = (js >= 1) & (js <= grid.j_max - 1)
print("log2 block norms:", np.round(np.log2(prof), 2))
print(f"fitted slope {np.polyfit(js[mid], np.log2(prof[mid]), 1)[0]:.3f} (expect about -0.5)")
