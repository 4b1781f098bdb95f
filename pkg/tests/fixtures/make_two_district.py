"""Regenerate the bundled two-district fixture.

Two adjacent districts in a 4 km x 3 km box split by a bent border. Outcomes
are log-price-like: a smooth spatial surface, a building-class offset, unit
noise, and a drop of 0.2 on the treatment side.

    python tests/fixtures/make_two_district.py
"""
import json
from pathlib import Path

import numpy as np
import shapely

from geordd.gp import Hyperparams, jitter_cholesky, kernel_matrix

OUT = Path(__file__).parent / "two_district"
BORDER = [(2.0, 0.0), (2.3, 1.2), (1.8, 2.1), (2.1, 3.0)]


def main(seed=2024, n=500):
    rng = np.random.default_rng(seed)
    west = shapely.Polygon([(0, 0)] + BORDER + [(0, 3)])
    east = shapely.Polygon([(4, 0)] + BORDER + [(4, 3)])
    pts = []
    while len(pts) < n:
        p = rng.uniform([0, 0], [4, 3])
        # denser toward the south-west, as a city grid thins out
        if rng.uniform() < 0.35 + 0.65 * np.exp(-p[0] / 3 - p[1] / 4):
            pts.append(p)
    X = np.array(pts)
    in_w = shapely.contains_xy(west, X[:, 0], X[:, 1])
    theta = Hyperparams(0.8, 0.3, 1.0, 1.0)
    f = jitter_cholesky(kernel_matrix(X, X, theta)).lower @ rng.standard_normal(n)
    cls = rng.choice(["A", "B", "C"], size=n, p=[0.5, 0.3, 0.2])
    offset = np.select([cls == "A", cls == "B"], [0.0, 0.3], -0.2)
    sqft = rng.lognormal(0.0, 0.3, n)
    y = 13.0 + f + offset + 0.5 * np.log(sqft) - 0.2 * in_w + 0.25 * rng.standard_normal(n)
    price = np.exp(y)
    OUT.mkdir(exist_ok=True)
    with open(OUT / "units.csv", "w") as fh:
        fh.write("x,y,price,district,building_class,log_sqft\n")
        for (a, b), pr, w, c, s in zip(X, price, in_w, cls, np.log(sqft)):
            fh.write(f"{a:.6f},{b:.6f},{pr:.2f},{'west' if w else 'east'},{c},{s:.6f}\n")
    (OUT / "border.geojson").write_text(json.dumps(
        {"type": "Feature", "properties": {},
         "geometry": {"type": "LineString", "coordinates": BORDER}}, indent=1))
    feats = [{"type": "Feature", "properties": {"district": lab},
              "geometry": shapely.geometry.mapping(poly)}
             for lab, poly in (("west", west), ("east", east))]
    (OUT / "regions.geojson").write_text(json.dumps(
        {"type": "FeatureCollection", "features": feats}, indent=1))


if __name__ == "__main__":
    main()
