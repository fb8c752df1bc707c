import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vtonsize import imaging, measure, wrinkle
from vtonsize.errors import InvalidInputError

from fixtures import CENTRES, ridge_image, single_ridge, zone_regions
from oracles import ratio_piecewise


# compensation ratio ----------------------------------------------------------

@pytest.mark.parametrize("length,expected", [(4000, 0.0), (7500, 0.10), (17500, 0.55), (20000, 1.0)])
def test_ratio_examples(length, expected):
    assert wrinkle.compensation_ratio(length) == pytest.approx(expected, abs=1e-15)


def test_ratio_jump_at_d():
    below = wrinkle.compensation_ratio(math.nextafter(20000.0, 0.0))
    assert below == pytest.approx(0.65, abs=1e-12)
    assert wrinkle.compensation_ratio(20000.0) == 1.0
    assert wrinkle.compensation_ratio(1e9) == 1.0


@settings(max_examples=200)
@given(st.floats(0, 19999.999), st.floats(0, 19999.999))
def test_ratio_monotone_below_d(a, b):
    lo, hi = sorted((a, b))
    assert wrinkle.compensation_ratio(lo) <= wrinkle.compensation_ratio(hi)
    assert wrinkle.compensation_ratio(hi) == pytest.approx(ratio_piecewise(hi) / 100.0, abs=1e-12)


@pytest.mark.parametrize("length", [9999.9999, 14999.9999])
def test_ratio_continuous_at_inner_breaks(length):
    step = wrinkle.compensation_ratio(math.ceil(length)) - wrinkle.compensation_ratio(length)
    assert 0 <= step < 1e-6


def test_ratio_rejects_bad_length():
    for bad in (-1.0, float("nan"), float("inf")):
        with pytest.raises(InvalidInputError):
            wrinkle.compensation_ratio(bad)


def test_custom_thresholds():
    t = wrinkle.CompensationThresholds(100, 200, 300, 400)
    assert wrinkle.compensation_ratio(150, t) == pytest.approx(0.002)
    with pytest.raises(InvalidInputError):
        wrinkle.CompensationThresholds(5, 5, 6, 7)


# compensated length ----------------------------------------------------------

def test_compensated_examples():
    assert wrinkle.compensated_length(400.0, 4000) == 400.0
    assert wrinkle.compensated_length(400.0, 7500) == pytest.approx(440.0)
    assert wrinkle.compensated_length(400.0, 25000) == 800.0


def test_compensated_literal_mode():
    assert wrinkle.compensated_length(400.0, 7500, mode="literal") == pytest.approx(8250.0)
    with pytest.raises(InvalidInputError):
        wrinkle.compensated_length(400.0, 7500, mode="other")
    with pytest.raises(InvalidInputError):
        wrinkle.compensated_length(-1.0, 7500)


@settings(max_examples=200)
@given(st.floats(0, 1e4), st.floats(0, 1e6))
def test_compensated_bounds(measured, length):
    tl = wrinkle.compensated_length(measured, length)
    assert measured <= tl <= 2 * measured


# zones and response ----------------------------------------------------------

def test_zones_partition_body():
    regions = zone_regions()
    z = wrinkle.make_zones(regions)
    assert not (z.region_a & z.region_b).any() and not (z.region_a & z.region_c).any()
    np.testing.assert_array_equal(z.region_a | z.region_b, regions.body)
    np.testing.assert_array_equal(z.region_c, regions.sleeves)
    assert z.region_a.sum() == z.region_b.sum()


def test_flat_zone_zero_response():
    zone = zone_regions().body
    assert not wrinkle.wrinkle_response(np.full(zone.shape, 0.4), zone).any()


def test_empty_zone_and_size_mismatch():
    gray = ridge_image([(170, 350, 0, 100)])
    assert not wrinkle.wrinkle_response(gray, np.zeros(gray.shape, bool)).any()
    with pytest.raises(InvalidInputError):
        wrinkle.wrinkle_response(gray, np.ones((5, 5), bool))


def test_pure_frangi_endpoint():
    cfg = wrinkle.DEFAULT_CONFIG
    zone = zone_regions().body
    gray = ridge_image([(170, 350, 30, 160), (430, 300, 80, 120)])
    filled = np.where(zone, gray, np.median(gray[zone]))
    se = imaging.StructuringElement("square", cfg.se_radius)
    ref = np.where(zone, imaging.frangi(imaging.grey_closing(filled, se), cfg.frangi_scales, cfg.frangi_beta, cfg.frangi_c), 0.0)
    out = wrinkle.wrinkle_response(gray, zone, fusion_weight=1.0)
    np.testing.assert_allclose(out, np.clip(ref, 0, 1), rtol=0, atol=1e-12)


def test_ridge_crest_collocated():
    zone = zone_regions().body
    gray = ridge_image([(201, 350, 0, 200)])
    resp = wrinkle.wrinkle_response(gray, zone)
    profile = resp[:, 300:400].mean(axis=1)
    assert abs(int(np.argmax(profile)) - 201) <= 1


# classification --------------------------------------------------------------

@pytest.mark.parametrize("angle,zone,dim", [(30, "A", "cl"), (30, "B", "cl"), (70, "A", "sw"), (70, "B", "ww"), (30, "C", "sl")])
def test_routing(angle, zone, dim):
    gray, regions, length = single_ridge(angle, zone)
    rep = wrinkle.analyze_wrinkles(gray, regions)
    (comp,) = rep.components
    assert comp.zone == zone and comp.dimension == dim
    assert comp.orientation == pytest.approx(angle, abs=1.0)
    assert rep.lengths[dim] == pytest.approx(length, rel=0.05)
    assert all(v == 0 for d, v in rep.lengths.items() if d != dim)


def test_route_table():
    assert wrinkle.route(44.999, "A") == "cl"
    assert wrinkle.route(45.0, "A") == "sw"
    assert wrinkle.route(45.0, "B") == "ww"
    assert wrinkle.route(90.0, "B") == "ww"
    assert wrinkle.route(0.0, "C") == "sl"
    assert wrinkle.route(45.0, "C") is None


def test_two_fixture_oracle():
    """30 deg in C plus 70 deg in A: totals equal each ridge's own length."""
    regions = zone_regions()
    ra, ca = CENTRES["A"]
    rc, cc = CENTRES["C"]
    both = wrinkle.analyze_wrinkles(ridge_image([(rc, cc, 30, 120), (ra, ca, 70, 160)]), regions)
    only_c = wrinkle.analyze_wrinkles(ridge_image([(rc, cc, 30, 120)]), regions)
    only_a = wrinkle.analyze_wrinkles(ridge_image([(ra, ca, 70, 160)]), regions)
    assert both.lengths["sl"] == pytest.approx(only_c.lengths["sl"], abs=1e-9)
    assert both.lengths["sw"] == pytest.approx(only_a.lengths["sw"], abs=1e-9)
    assert both.lengths["cl"] == both.lengths["ww"] == 0.0


def test_unrouted_component_kept():
    gray, regions, _ = single_ridge(70, "C")
    rep = wrinkle.analyze_wrinkles(gray, regions)
    (comp,) = rep.components
    assert comp.zone == "C" and comp.dimension is None
    assert all(v == 0 for v in rep.lengths.values())


def test_component_outside_zones_dropped():
    zones = wrinkle.make_zones(zone_regions())
    resp = np.zeros(zones.region_a.shape)
    resp[580:583, 100:300] = 1.0  # below every zone
    rep = wrinkle.classify_wrinkles(resp, zones)
    assert rep.components == () and all(v == 0 for v in rep.lengths.values())


def test_totals_permutation_invariant():
    regions = zone_regions()
    zones = wrinkle.make_zones(regions)
    segs = [(100, 260, 10, 80), (150, 420, 80, 90), (260, 300, 20, 70), (420, 250, 5, 100),
            (460, 450, 75, 80), (200, 95, 15, 90), (480, 95, 0, 100)]
    gray = ridge_image(segs)
    resp = np.maximum(wrinkle.wrinkle_response(gray, zones.region_a | zones.region_b),
                      wrinkle.wrinkle_response(gray, zones.region_c))
    full = wrinkle.classify_wrinkles(resp, zones)
    assert len(full.components) == len(segs)
    # each component on its own, re-binarized against the same peak
    singles = []
    for comp in imaging.connected_components(resp > 0.2 * resp.max(), 8):
        part = np.zeros_like(resp)
        part[comp.rows, comp.cols] = resp[comp.rows, comp.cols]
        part[0, 0] = resp.max()  # same absolute threshold; outside every zone
        singles.append(wrinkle.classify_wrinkles(part, zones))
    rng = random.Random(0)
    for _ in range(5):
        rng.shuffle(singles)
        for d in measure.DIMENSIONS:
            assert sum(r.lengths[d] for r in singles) == pytest.approx(full.lengths[d], abs=1e-9)


def test_classify_threshold_validation():
    zones = wrinkle.make_zones(zone_regions())
    with pytest.raises(InvalidInputError):
        wrinkle.classify_wrinkles(np.zeros(zones.region_a.shape), zones, 1.0)
    rep = wrinkle.classify_wrinkles(np.zeros(zones.region_a.shape), zones)
    assert all(v == 0 for v in rep.lengths.values())


def test_config_validation():
    with pytest.raises(InvalidInputError):
        wrinkle.WrinkleConfig(fusion_weight=1.5)
    with pytest.raises(InvalidInputError):
        wrinkle.WrinkleConfig(zone_split=1.0)


# compensation ----------------------------------------------------------------

def test_compensate_per_dimension():
    raw = measure.Measurement(400.0, 300.0, 200.0, 250.0, sl_left=300.0, sl_right=290.0)
    rep = wrinkle.WrinkleReport({"cl": 7500.0, "sl": 0.0, "sw": 17500.0, "ww": 25000.0}).with_ratios()
    out = wrinkle.compensate(raw, rep)
    assert out.cl == pytest.approx(440.0) and out.sl == 300.0
    assert out.sw == pytest.approx(310.0) and out.ww == 500.0
    assert out.sl_right == 290.0
    assert rep.ratios == {"cl": pytest.approx(0.1), "sl": 0.0, "sw": pytest.approx(0.55), "ww": 1.0}


def test_report_serialises():
    gray, regions, _ = single_ridge(30, "A")
    d = wrinkle.analyze_wrinkles(gray, regions).as_dict()
    assert set(d) == {"lengths", "ratios", "components"}
    assert d["components"][0]["dimension"] == "cl"
