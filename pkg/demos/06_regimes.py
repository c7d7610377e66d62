"""
Growth regimes in lambda
========================

Resistance diameter and total conductance are exact; the cover-time column is
fitted from Monte Carlo means. Rates are slopes of ``log(value / n**k)`` in
``n``, where ``n**k`` is the polynomial factor expected in each regime.
"""

import math
from pathlib import Path

from lambdacover.analysis import growth_rate_plot_data, regime_table, svg_plot

rows = regime_table([0.5, 1.0, 1.5, 2.0, 3.0], range(4, 10), samples=200, seed=0, cover_depths=range(5, 10))
for r in rows:
    print(f"lambda={r.lam:<4} {r.regime:<11} exp rates: R {math.exp(r.resistance_rate):.3f} "
          f"C {math.exp(r.conductance_rate):.3f} cover {math.exp(r.cover_rate):.3f}")

lams = [0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]
pts = growth_rate_plot_data(lams, samples=100, seed=1)
Path("growth.svg").write_text(svg_plot({"fitted": ([a for a, _ in pts], [b for _, b in pts])},
                                       "lambda", "exp(rate)", logy=True))
print("wrote growth.svg")
