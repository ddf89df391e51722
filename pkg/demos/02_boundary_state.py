"""Two regions with different winding numbers trap light at their interface."""
import math

from topowalk import walkgraph as wg
from topowalk.sshmodel import effective_winding_from_graph

winding = wg.RegionPhases.uniform(-math.pi / 2, 0.0)
trivial = wg.RegionPhases.uniform(1.5, 2.5)
chain = wg.build_chain(wg.ChainSpec(((winding, 86), (trivial, 86))))
boundary = chain.boundary_positions[0]

for r in range(2):
    print("region", r, "winding", effective_winding_from_graph(chain, "V", region=r).nu)

# far from the boundary, next to it, and just past it
for start in (68, 85, 88):
    _, hist = wg.evolve(wg.inject(chain, start, "A", "V"), chain, 100)
    peak = wg.boundary_peak_mass(hist, boundary, 2)
    right = wg.crossing_mass(hist[-1], boundary, "right")
    left = wg.crossing_mass(hist[-1], boundary, "left")
    print(f"start {start}: peak at step 50/75/100 = "
          f"{peak[50]:.3f} {peak[75]:.3f} {peak[100]:.3f}; right {right:.2e} left {left:.2e}")

# swap the interior phases of the first region for the second's for one step
jolt = wg.PerturbationSchedule.jolt(30, chain, source_region=1, target_region=0)
s0 = wg.inject(chain, 68, "A", "V")
calm, _ = wg.evolve(s0, chain, 100, record=False)
shaken, _ = wg.evolve(s0, chain, 100, jolt, record=False)
a = wg.crossing_mass(wg.position_distribution(calm), boundary, "right")
b = wg.crossing_mass(wg.position_distribution(shaken), boundary, "right")
print(f"crossing mass with and without a jolt at step 30: {b:.3e} vs {a:.3e}")
