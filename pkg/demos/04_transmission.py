"""Analytic two-band chain: how much of a wavepacket leaks across an interface."""
from topowalk.sshmodel import BlochModel, boundary_transmission, winding_number

for v, w in ((1, 2), (2, 1)):
    print(f"v={v} w={w}: winding {winding_number(BlochModel(v, w)).nu}")

print("contrast   transmission   reflection")
for c in (0.0, 0.5, 0.8, 0.9, 0.95, 0.97, 0.99):
    r = boundary_transmission(1 - c, 1 + c, detail=True)
    print(f"{c:8.2f}   {r.transmission:12.3e}   {r.reflection:10.6f}")
