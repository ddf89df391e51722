"""A photon on a uniform multiport chain spreads linearly in time."""
import math

import numpy as np

from topowalk import walkgraph as wg

# one region, 172 cells, the diamond phases that give a winding of 1
phases = wg.RegionPhases.uniform(-math.pi / 2, 0.0)
chain = wg.build_chain(wg.ChainSpec.uniform(phases, 172))
print(chain)

start = wg.inject(chain, 68, "A", "V")
final, history = wg.evolve(start, chain, 50)

# the final histogram has two lobes running away from the start
cells = history[-1].cells()
for c in range(30, 110, 2):
    print(f"{c:4d} {'#' * int(400 * cells[c])}")

quantum = wg.spread_slope(history, start=10)
print("quantum   std ~ %.3f * step  (R2 %.5f)" % (quantum.slope, quantum.r2))

# same graph, but |amplitude|^2 used as transition probabilities
classical = wg.classical_walk(start, 50)
lin = wg.spread_slope(classical, start=10)
root = wg.spread_slope(classical, start=10, model="sqrt")
print("classical linear R2 %.5f, sqrt R2 %.5f" % (lin.r2, root.r2))

print("norm after 50 steps:", final.norm_squared())
print("std at steps 10, 30, 50:", np.round(wg.std_series(history)[1][[10, 30, 50]], 3))
