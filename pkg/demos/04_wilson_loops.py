"""
Wilson loops against the Brownian oracle
========================================

Holonomies of smoothed fields around rectangles are compared with a
geodesic random walk on SU(2) run for the enclosed area. For SU(2) the
mean of Re tr U is 2 exp(-3A/4).
"""

import math

import numpy as np

from axialym.curves import rectangle_lasso, refine_knots
from axialym.spectral import TorusGrid, sample_noise_batch
from axialym.transport import SmoothedConnection, lie_bm_final_batch, transport_final_batch

grid = TorusGrid(L=4.0, N=256)
j, samples = grid.j_max, 600
vals = sample_noise_batch(range(samples), grid, band=j)
conn = SmoothedConnection.from_batch(grid, 2, vals, j)

for w, h in [(0.5, 0.5), (1.0, 1.0), (0.5, 2.0)]:
    loop = rectangle_lasso((1.0, 1.0), w, h).composite()
    U = transport_final_batch(conn, loop, refine_knots(loop, 2048))
    tr = np.real(np.trace(U, axis1=1, axis2=2))
    oracle, _ = lie_bm_final_batch(w * h, 2, 128, range(10**6, 10**6 + samples))
    otr = np.real(np.trace(oracle, axis1=1, axis2=2))
    se = math.hypot(tr.std() / math.sqrt(samples), otr.std() / math.sqrt(samples))
    print(f"area {w * h:4.2f}: field {tr.mean():.3f}, oracle {otr.mean():.3f} (+- {se:.3f}), "
          f"heat kernel {2 * math.exp(-0.75 * w * h):.3f}")
