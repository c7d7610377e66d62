"""
The Gaussian field on the tree
==============================

Independent ``N(0, lam**m)`` increments along the edges give a field whose
increment variance is the tree distance. Its expected supremum stays bounded
as the tree grows.
"""

from lambdacover.gaussian import concentration_tail_check, estimate_esup, gamma2_upper
from lambdacover.tree import Params
from lambdacover.walk import sample_tree_cover

for n in (2, 4, 6, 8, 10, 12):
    p = Params(0.5, n)
    est = estimate_esup(p, 5000, seed=n)
    print(f"n={n:2d}: E sup = {est.estimate:.4f} +- {est.stderr:.4f}, chaining bound {gamma2_upper(p):.4f}")

p = Params(0.5, 8)
taus, _ = sample_tree_cover(p, 10_000, seed=1)
fit = concentration_tail_check(taus, p)
print(f"tail of tau (lam/2)**n: P >= u ~ {fit.C:.3f} exp(-{fit.c:.3f} u)")
