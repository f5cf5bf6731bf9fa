"""Numeric constants, the entropy band they induce, and where it sits
relative to the largest entropy a single extra assignment can add (log 2)."""
import math

from ogplab import constants as C
from ogplab.overlap import OgpBandSpec

print(C.format_table(C.constants_table(kappa=6.0)))
print()

sol = C.solve_kappa(6.0)
print(f"band edges at kappa=6: beta- = {sol.beta_minus:.5f}, beta+ = {sol.beta_plus:.5f}, eps = {sol.epsilon:.4f}")
print(f"{'k':>6} {'band lo':>9} {'band hi':>9}  reachable")
for k in (5, 8, 10, 16, 64, 1024):
    band = OgpBandSpec.from_kappa(6.0, k)
    print(f"{k:>6} {band.lo:>9.4f} {band.hi:>9.4f}  {band.lo <= math.log(2)}")
