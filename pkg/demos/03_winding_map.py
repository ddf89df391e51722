"""Which diamond phase pairs wind, and does that match the transmission rule?"""
import math

import numpy as np

from topowalk.errors import GapClosedError
from topowalk.multiport import diamond_transmission
from topowalk.sshmodel import phase_winding

grid = np.linspace(-3, 3, 13)
print("      " + " ".join(f"{b:5.1f}" for b in grid))
agree = total = 0
for a in grid:
    row = []
    for b in grid:
        try:
            nu = phase_winding(a, b, n_k=256).nu
        except GapClosedError:
            row.append("    .")
            continue
        row.append(f"{nu:5d}")
        # winding happens when the second diamond transmits more than the first
        total += 1
        agree += nu == int(diamond_transmission(b, -math.pi / 2) > diamond_transmission(a, -math.pi / 2))
    print(f"{a:5.1f} " + " ".join(row))
print(f"{agree}/{total} points follow |t(phi_b)| > |t(phi_a)|")
