"""Polarization qubits stored in rings, and Bell pairs split across two chains."""
import math

import numpy as np

from topowalk import entangle as en
from topowalk import walkgraph as wg

# H sees a trivial pair of diamonds, V a winding one
protected = wg.RegionPhases(-math.pi / 2, 2.0, 0.0)
plain = wg.RegionPhases(-math.pi / 2, 0.0, 0.0)
ring = wg.build_chain(wg.ChainSpec.uniform(protected, 200, periodic=True))
flat = wg.build_chain(wg.ChainSpec.uniform(plain, 200, periodic=True))

q = en.PolarizationQubit.normalized(0.6, 0.8j)
stored = en.register_write(q, ring, cell=100)
later, _ = wg.evolve(stored, ring, 200, record=False)
print("written", q.probabilities, "read back", en.register_read(later))

h = en.PolarizationQubit(1, 0)
for eps in (0.0025, 0.005, 0.01):
    a = en.polarization_flip_rate(ring, h, eps)
    b = en.polarization_flip_rate(flat, h, eps)
    print(f"mix {eps}: flip {a:.2e} protected, {b:.2e} plain ({b / a:.0f}x)")

pair = en.bell_state(1, (ring, ring), 100)
print("Bell entropy", en.entanglement_entropy(pair),
      "after 200 steps", en.entanglement_entropy(en.evolve_two_photon(pair, 200)))

# one chain whose V light binds at cell 120 and a second one set up the same way
right = wg.RegionPhases(1.5, 2.5, 2.5)
chains = [wg.build_chain(wg.ChainSpec(((left, 120), (right, 120))))
          for left in (protected, protected)]
state = en.evolve_two_photon(en.bell_state(1, tuple(chains), 119), 200)
edge = en.edge_projection(state, 120)
print("edge basis probabilities (rows: upper e/none, cols: lower e/none)")
print(np.round(edge.probabilities(), 4), "residual", round(edge.residual, 3))
print("entropy within the edge basis", round(edge.entropy_bits(), 4))
