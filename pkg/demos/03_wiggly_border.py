"""Which average effect survives a wiggly border?

The true effect is tau(b) = b_1, increasing from west to east. Making the
western half of the border zig-zag adds arc length there, so averages taken
along the curve (UNIF, RHO) drift toward the west, while averages over
units or land (INV, PROJ, GEO, POP) barely move.

    python demos/03_wiggly_border.py   (about 15 s, 1 GB)
"""
from geordd.sims import WigglyScenario, sim_wiggly, wiggly_border

print("border length by wiggle count:",
      {w: round(wiggly_border(w).length, 1) for w in (0, 10, 100, 1000)})

res = sim_wiggly(WigglyScenario(), n_sims=200, seed=1, wiggles=(0, 3, 10, 40, 160, 1000))
print("\nmean estimate (true estimand) by wiggle count")
schemes = ("UNIF", "RHO", "INV", "PROJ", "GEO", "POP")
print("wiggles " + "".join(f"{s:>15s}" for s in schemes))
for w in (0, 3, 10, 40, 160, 1000):
    cells = []
    for s in schemes:
        _, _, est, _, truth, _, _ = res.where(scheme=s, n_wiggles=w)[0]
        cells.append(f"{est:6.2f} ({truth:4.2f})")
    print(f"{w:7d} " + "".join(f"{c:>15s}" for c in cells))
