"""
Cover times: exact values and Monte Carlo
=========================================

On small trees the expected cover time is computed exactly over
(vertex, visited set) states. Monte Carlo samples should agree.
"""

import math

from lambdacover.network import build_tree_network, exact_expected_cover_time
from lambdacover.tree import ROOT, Params
from lambdacover.walk import canonical_engine, sample_cover_times, sample_tree_cover

for n in (1, 2, 3):
    p = Params(0.5, n)
    exact = exact_expected_cover_time(build_tree_network(p), ROOT)
    x = sample_cover_times(canonical_engine(p), ROOT, 20_000, seed=n)
    se = x.std(ddof=1) / math.sqrt(len(x))
    print(f"T_{n}: exact {exact:9.4f}   simulated {x.mean():9.4f} +- {se:.4f}")

# deeper trees use the compressed sampler: visits to fully explored subtrees
# are drawn as a single excursion length
for n in (8, 10, 12):
    taus, jumps = sample_tree_cover(Params(0.5, n), 200, seed=7)
    print(f"T_{n}: mean cover time {taus.mean():.4g} after {jumps.mean():.3g} jumps on average")
