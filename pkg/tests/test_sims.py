import numpy as np
import pytest

from geordd.late import Scheme
from geordd.sims import (
    WIGGLE_GRID,
    WigglyScenario,
    _wave,
    county_like_layout,
    sim_confounding,
    sim_power,
    sim_wiggly,
    two_region_layout,
    wiggly_border,
    wiggly_estimands,
    wiggly_locations,
)

# true UNIF and RHO estimands (two decimals) for the wiggle grid
REFERENCE_UNIF = [1.00, .99, .95, .91, .82, .67, .52, .41, .34, .30, .27, .26, .26]
REFERENCE_RHO = [1.21, 1.19, 1.14, 1.08, .96, .76, .58, .44, .35, .30, .28, .26, .26]


class TestWigglyGeometry:
    def test_border_shape(self):
        b = wiggly_border(2, 0.05)
        assert len(b.vertices) == 2 * 4 + 2
        assert b.vertices[:, 1].max() == pytest.approx(0.05)
        assert b.length == pytest.approx(1.5 + 8 * np.hypot(0.0625, 0.05))

    def test_wave_matches_border(self):
        b = wiggly_border(5, 0.05)
        s = np.linspace(0, 1.9, 777)
        y = _wave(s, 5, 0.05)
        pts = b.point_at(np.linspace(0, b.length, 5001))
        np.testing.assert_allclose(np.interp(s, pts[:, 0], pts[:, 1]), y, atol=1e-3)

    def test_locations_fixed(self):
        sc = WigglyScenario()
        X = wiggly_locations(sc)
        assert X.shape == (200, 2)
        np.testing.assert_array_equal(X, wiggly_locations(sc))
        # block counts follow mass 0.5, 0.3, 1.0
        counts = np.bincount(np.searchsorted([0.5, 1.5], X[:, 0], side="right"))
        np.testing.assert_array_equal(counts, [56, 33, 111])

    def test_density(self):
        d = WigglyScenario().density([[0.1, 0], [1.0, 0], [1.9, 0]])
        np.testing.assert_allclose(d, [1.0, 0.3, 2.0])


@pytest.fixture(scope="module")
def estimand_table():
    return [wiggly_estimands(WigglyScenario(n_wiggles=w), fine_grid=0.1) for w in WIGGLE_GRID]


def test_estimands_reproduce_reference_table(estimand_table):
    mine = [(e[Scheme.UNIF], e[Scheme.RHO]) for e in estimand_table]
    ref = list(zip(REFERENCE_UNIF, REFERENCE_RHO))
    diffs = np.abs(np.array(mine) - np.array(ref))
    # every value within one unit of the last reference digit
    assert diffs.max() < 0.01
    # all but two round to the reference value: UNIF at 160 wiggles (0.2948
    # against 0.30) and RHO at 20 wiggles (0.5736 against 0.58)
    rounded = np.round(np.array(mine), 2) == np.array(ref)
    assert rounded.sum() == 24
    assert not rounded[WIGGLE_GRID.index(160), 0] and not rounded[WIGGLE_GRID.index(20), 1]


def test_straight_estimands_hand_values():
    e = wiggly_estimands(WigglyScenario(), fine_grid=0.02)
    assert e[Scheme.UNIF] == pytest.approx(1.0)
    # (0.5 * 0.25 + 0.3 * 1.0 + 2.0 * 1.75 * 0.5 / 1) / (0.5 + 0.3 + 1.0), block masses
    rho = (1.0 * 0.5 * 0.25 + 0.3 * 1.0 * 1.0 + 2.0 * 0.5 * 1.75) / (0.5 + 0.3 + 1.0)
    assert e[Scheme.RHO] == pytest.approx(rho)
    assert e[Scheme.GEO] == pytest.approx(1.0)
    assert e[Scheme.POP] == pytest.approx(rho)


def test_sim_wiggly_small_run():
    res = sim_wiggly(n_sims=40, seed=1, wiggles=(0, 3))
    assert len(res.rows) == 12
    for scheme in ("UNIF", "RHO", "GEO", "POP"):
        row = res.where(scheme=scheme, n_wiggles=0)[0]
        # unbiased at zero wiggles up to Monte Carlo and shrinkage error
        assert abs(row[2] - row[4]) < 4 * row[5] + 0.1
    again = sim_wiggly(n_sims=40, seed=1, wiggles=(0, 3))
    assert again.rows == res.rows


def test_confounding_small():
    res = sim_confounding(n=6000, seed=2, gp_subsample=800)
    est_1d = res.where(estimator="projected_1d_rdd")[0][1]
    est_gp = res.where(estimator="geordd_inv")[0][1]
    assert est_1d == pytest.approx(-1.0, abs=0.15)
    assert abs(est_gp) < 0.15
    assert res.metadata["analytic_1d_limit"] == -1.0


def test_layouts():
    X_T, X_C, border = two_region_layout(n_side=4, seed=1)
    assert X_T.shape == X_C.shape == (16, 2)
    assert np.all(X_T[:, 0] > 0) and np.all(X_C[:, 0] < 0)
    X_T, X_C, border = county_like_layout()
    assert (len(X_T), len(X_C)) == (114, 77)
    assert border.length == pytest.approx(530.0)


def test_power_small(tmp_path):
    res = sim_power(tau_effect=0.0, n_sims=30, B=100, seed=3, shared_null=True)
    assert res.column("test") == ["INV_UNCALIBRATED", "INV_ANALYTIC", "INV_BOOTSTRAP",
                                  "MLL_BOOTSTRAP", "CHI2_BOOTSTRAP"]
    assert all(0 <= p <= 1 for p in res.column("power"))
    res.to_csv(tmp_path / "p.csv")
    res.write_metadata(tmp_path / "p.json")
    assert (tmp_path / "p.csv").read_text().startswith("test,tau,power,mc_se\n")
