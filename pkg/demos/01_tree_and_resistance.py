"""
The weighted tree as an electrical network
==========================================

Edges leaving depth ``m`` get conductance ``lam**-m``. Resistance along the
tree is then the path length with edge lengths ``lam**m``, and the leaves
converge to a Cantor set.
"""

import numpy as np

from lambdacover.network import ResistanceSolver, build_tree_network, trace_network
from lambdacover.tree import LeafAddress, Params, ROOT, Vertex, cantor_embed, level, metric_d

p = Params(0.5, 4)
net = build_tree_network(p)
print(f"T_{p.n}: {len(net)} vertices, total conductance {net.total_measure:g}")

# resistance from a linear solve against the path metric
solver = ResistanceSolver(net)
for a, b in [(ROOT, Vertex(4, 0)), (Vertex(4, 0), Vertex(4, 15)), (Vertex(2, 1), Vertex(3, 6))]:
    r = solver.resistance(net.index_of(a), net.index_of(b))
    print(f"R({a}, {b}) = {r:.6f}   path length {metric_d(a, b, p):.6f}")

# tracing onto the leaves keeps every pairwise resistance
leaves = trace_network(net, level(4))
print("conductances from leaf 0000 after tracing:", np.round(leaves.dense()[0], 4))

# boundary points i000... sit in the middle-thirds Cantor set
for v in level(2):
    print(f"{LeafAddress(v)} -> {cantor_embed(LeafAddress(v)):.4f}")
