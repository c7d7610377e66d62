"""
Rescaled cover times and the boundary chain
===========================================

After multiplying by ``(2-lam)/(4 lam) (lam/2)**n`` the cover time of the tree
walk is compared with the cover time of the chain on ``2**n`` boundary points.
"""

import numpy as np

from lambdacover.analysis import ks_critical_value, ks_two_sample
from lambdacover.limit import LadderSpec, rescale_array, sample_limit_cover, sample_tilde_cover
from lambdacover.tree import Params
from lambdacover.walk import sample_tree_cover

for n in (6, 8, 10):
    p = Params(0.5, n)
    raw, _ = sample_tree_cover(p, 1000, seed=10 + n)
    tilde = sample_tilde_cover(p, 1000, seed=20 + n)
    scaled = rescale_array(raw, "raw", p)
    print(f"n={n:2d}: tree {scaled.mean():.3f}, boundary {tilde.mean():.3f}, "
          f"KS {ks_two_sample(scaled, tilde):.3f} (1% critical {ks_critical_value(1000, 1000):.3f})")

# nested cover times along one boundary chain: the increments shrink
times = sample_limit_cover(LadderSpec(0.5, 10, samples=1000, seed=3))
print("levels 4, 6, 8, 10 mean cover times:", np.round(times.mean(axis=0), 4))
print("increments:", np.round(np.diff(times.mean(axis=0)), 4))
