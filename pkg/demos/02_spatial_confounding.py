"""Why collapsing to distance-from-the-border can mislead.

Outcomes rise with the east-west coordinate and there is no effect at all.
Treated units crowd the west end of the border and controls the east end,
so a 1D regression on signed distance mistakes that imbalance for a jump
of about -alpha/3. The spatial model compares like with like along the
border and finds nothing.

    python demos/02_spatial_confounding.py
"""
from geordd.sims import sim_confounding

for alpha in (1.0, 3.0):
    res = sim_confounding(alpha=alpha, n=20000, seed=0)
    (_, rdd, _), (_, geo, sd) = res.rows
    print(f"alpha = {alpha}: 1D RDD {rdd:+.3f} (limit {-alpha / 3:+.3f}),  "
          f"GeoRDD INV {geo:+.3f} +- {sd:.3f}")

# The 1D bias does not shrink with the bandwidth, since it comes from where
# the units sit along the border rather than how far they are from it.
for h in (0.25, 0.5, 1.0):
    res = sim_confounding(alpha=3.0, n=20000, seed=1, h=h)
    print(f"h = {h}: 1D RDD {res.rows[0][1]:+.3f}")
