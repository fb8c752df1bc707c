"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL (...)`` line (visible
in ``pytest -v`` output) before asserting.
"""

import json
import os
import time

import numpy as np
import pytest

from vtonsize import imaging, measure, pipeline, pose, refine, size_eval, synthetic, wrinkle

from fixtures import WIDE_BASE, WIDE_LAYOUT, grating, single_ridge, tube
from oracles import fd_gradient_error, gated_conv_loop, metrics_loop, ratio_piecewise


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


# 1 ---------------------------------------------------------------------------

RATIO_TABLE = {
    0: 0.0, 4999: 0.0, 5000: 0.0, 7500: 0.10, 9999: 0.19996, 10000: 0.20, 12500: 0.325,
    15000: 0.45, 17500: 0.55, 19999: 0.64996, 20000: 1.0, 10 ** 6: 1.0,
}


def test_criterion_1_ratio_exactness(verdict):
    t = wrinkle.CompensationThresholds(5000, 10000, 15000, 20000)
    got = {L: wrinkle.compensation_ratio(L, t) for L in RATIO_TABLE}
    exact = all(got[L] == ratio_piecewise(L) / 100.0 for L in RATIO_TABLE)
    near = all(abs(got[L] - v) < 1e-15 for L, v in RATIO_TABLE.items())
    bounds = got[20000] == 1.0 and got[5000] == 0.0 and got[10000] == 0.2 and got[15000] == 0.45
    elapsed = best_of(lambda: [wrinkle.compensation_ratio(L, t) for L in RATIO_TABLE])
    ok = exact and near and bounds and elapsed < 1e-3
    verdict(1, ok, f"{len(RATIO_TABLE)} branch values, bit-exact={exact}, runtime {elapsed * 1e6:.0f} us")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_increments_and_weights(verdict):
    def cm(cl, sl, sw, ww):
        return measure.Measurement(cl, sl, sw, ww, unit="cm")

    t = size_eval.SizeTriplet({1: cm(65, 60.0, 40, 50), 2: cm(68, 61.2, 42, 53), 3: cm(71, 61.9, 44, 56)})
    inc = size_eval.increments(t)
    expected = {"A1-A2": {"cl": 3, "sl": 1.2, "sw": 2, "ww": 3}, "A2-A3": {"cl": 3, "sl": 0.7, "sw": 2, "ww": 3}}
    inc_err = max(abs(inc[p][d] - v) for p, row in expected.items() for d, v in row.items())
    same = size_eval.increments(size_eval.SizeTriplet({k: cm(65, 60, 40, 50) for k in (1, 2, 3)}))
    zeros = all(v == 0 for row in same.values() for v in row.values())
    ref = {"cl": 66.0, "sl": 60.0, "sw": 40.0, "ww": 50.0}
    e1 = abs(size_eval.weighted_score({"cl": 1, "sl": 2, "sw": 3, "ww": 4}, ref) - 506 / 216)
    e2 = abs(size_eval.weighted_score({"cl": 1, "sl": 2, "sw": 3, "ww": 4}, dict.fromkeys(ref, 5.0)) - 2.5)
    e3 = abs(size_eval.weighted_score(dict.fromkeys(ref, 0.7), ref) - 0.7)
    worst = max(inc_err, e1, e2, e3)
    verdict(2, worst <= 1e-12 and zeros, f"max deviation {worst:.1e} incl. 506/216 case")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_metric_oracle(verdict):
    rng = np.random.default_rng(2024)
    batches = []
    for _ in range(1000):
        n = int(rng.integers(1, 101))
        s = float(rng.uniform(0.5, 5.0))
        batches.append((rng.uniform(0, 2 * s, n) * (rng.random(n) > 0.05), s))
    t0 = time.perf_counter()
    results = [size_eval.error_metrics(o, s) for o, s in batches]
    elapsed = time.perf_counter() - t0
    worst, jensen = 0.0, True
    for (o, s), m in zip(batches, results):
        ref = metrics_loop(list(o), s)
        worst = max(worst, max(abs(a - b) for a, b in zip((m.mae, m.rmse, m.mape, m.smape), ref)))
        jensen &= m.mae <= m.rmse
    ok = worst <= 1e-9 and jensen and elapsed < 1.0
    verdict(3, ok, f"1000 batches, max deviation {worst:.1e}, MAE<=RMSE on all={jensen}, runtime {elapsed:.2f} s")


# 4 ---------------------------------------------------------------------------

def _random_fixture(rng, shape=(1024, 768)):
    h, w = shape
    yy, xx = np.ogrid[:h, :w]
    mo = np.zeros(shape, bool)
    for _ in range(int(rng.integers(0, 5))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ay, ax = rng.uniform(10, 300, 2)
        mo |= ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1
    mo ^= rng.random(shape) < rng.uniform(0, 0.01)
    pts = np.zeros((25, 3))
    pts[:, 0] = rng.uniform(-50, w + 50, 25)
    pts[:, 1] = rng.uniform(-50, h + 50, 25)
    pts[:, 2] = 0.9
    return mo, pose.PoseKeypoints(pts)


def test_criterion_4_mask_nesting(verdict):
    rng = np.random.default_rng(4)
    n, violations, identical = 100, 0, True
    t0 = time.perf_counter()
    for _ in range(n):
        mo, kp = _random_fixture(rng)
        m1, m2, m3 = pose.multi_size_masks(mo, kp)
        violations += int((m1 & ~m2).sum() + (m2 & ~m3).sum())
        identical &= m1.tobytes() == mo.tobytes()
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and identical and elapsed < 30
    verdict(4, ok, f"{n} fixtures at 1024x768, {violations} violations, level 1 identical={identical}, runtime {elapsed:.1f} s")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_gated_conv(verdict):
    rng = np.random.default_rng(5)
    worst_fwd = 0.0
    for _ in range(50):
        ei = rng.normal(size=(2, 4, 4))
        fi = rng.normal(size=(2, 4, 4))
        p = refine.GatedConvParams(rng.normal(size=(2, 2)), rng.normal(size=2), rng.normal(size=(2, 2)))
        out = refine.gated_conv_forward(ei, fi, p)
        worst_fwd = max(worst_fwd, float(np.abs(out - gated_conv_loop(ei, fi, p.weight, p.bias, p.mix)).max()))
    worst_grad = max(fd_gradient_error(seed) for seed in range(20))
    ok = worst_fwd <= 1e-6 and worst_grad < 1e-4
    verdict(5, ok, f"forward max deviation {worst_fwd:.1e}, gradient max rel. error {worst_grad:.1e} over 20 seeds")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_wrinkle_classification(verdict):
    cases = [(30, "A", "cl"), (70, "A", "sw"), (70, "B", "ww"), (30, "C", "sl")]
    correct, worst = 0, 0.0
    for angle, zone, dim in cases:
        gray, regions, length = single_ridge(angle, zone)
        rep = wrinkle.analyze_wrinkles(gray, regions)
        routed = [c.dimension for c in rep.components]
        correct += routed == [dim]
        worst = max(worst, abs(rep.lengths[dim] - length) / length)
    ok = correct == len(cases) and worst <= 0.05
    verdict(6, ok, f"{correct}/{len(cases)} routed correctly, worst length error {100 * worst:.2f} %")


# 7 ---------------------------------------------------------------------------

def _evaluate(root, layout, base, wrinkles_px=0.0):
    manifest = synthetic.write_dataset(root, [base], layout, wrinkles_px=wrinkles_px)
    cfg = pipeline.load_config(env={}, overrides={"manifest": manifest, "out": os.path.join(root, "out")})
    t0 = time.perf_counter()
    out = pipeline.cmd_evaluate(cfg)
    elapsed = time.perf_counter() - t0
    assert not out.failed, out.failed
    return out.outputs["document"], elapsed


def test_criterion_7_synthetic_end_to_end(verdict, tmp_path):
    doc, t_plain = _evaluate(str(tmp_path / "plain"), synthetic.Layout(), {"cl": 65, "sl": 60, "sw": 40, "ww": 44})
    pairs = doc["aggregate"]["pairs"]
    mape = max(m["mape"] for row in pairs.values() for m in row.values())
    rmse = max(m["rmse"] for row in pairs.values() for m in row.values())

    flat, _ = _evaluate(str(tmp_path / "wide"), WIDE_LAYOUT, WIDE_BASE)
    wavy, t_wavy = _evaluate(str(tmp_path / "wavy"), WIDE_LAYOUT, WIDE_BASE, wrinkles_px=7500)
    shifts = []
    for lvl in ("1", "2", "3"):
        a = flat["records"][0]["levels"][lvl]["compensated_cm"]
        b = wavy["records"][0]["levels"][lvl]["compensated_cm"]
        shifts += [b[d] / a[d] - 1 for d in measure.DIMENSIONS]
    lo, hi = min(shifts), max(shifts)
    ok = mape < 1.0 and rmse < 0.05 and 0.095 <= lo and hi <= 0.105 and max(t_plain, t_wavy) < 10
    verdict(7, ok, f"MAPE max {mape:.3f} %, RMSE max {rmse:.4f} cm, wrinkle shift {100 * lo:.2f}-{100 * hi:.2f} %, "
                   f"runtime {t_plain:.1f} s / {t_wavy:.1f} s per triplet")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_filter_sanity(verdict):
    img = tube()
    fr = imaging.frangi(img)
    crest, background = np.median(fr[48, 10:-10]), np.median(fr[5:20, 10:-10])
    ratio = crest / max(background, 1e-12)
    g = grating()
    r90 = imaging.gabor_response(g, 90.0)[24:-24, 24:-24].mean()
    r0 = imaging.gabor_response(g, 0.0)[24:-24, 24:-24].mean()
    selectivity = r90 / r0
    det = np.array_equal(fr, imaging.frangi(img)) and np.array_equal(imaging.gabor_response(g, 90.0), imaging.gabor_response(g, 90.0))
    ok = ratio > 10 and selectivity >= 5 and det
    verdict(8, ok, f"Frangi crest {crest:.3f} vs background {background:.1e} (ratio {ratio:.3g}), "
                   f"Gabor 90/0 deg {r90:.3f}/{r0:.1e} (ratio {selectivity:.3g}), deterministic={det}")


# 9 ---------------------------------------------------------------------------

def test_criterion_9_determinism_and_band(verdict, tmp_path):
    manifest = synthetic.write_dataset(str(tmp_path / "d"), [{"cl": 65, "sl": 60, "sw": 40, "ww": 44}, {"cl": 62, "sl": 58, "sw": 38, "ww": 42}])
    cfg = pipeline.load_config(env={}, overrides={"manifest": manifest, "out": str(tmp_path / "o"), "jobs": 2})
    pipeline.cmd_evaluate(cfg)
    first = open(cfg.report_path(), "rb").read()
    pipeline.cmd_evaluate(cfg)
    second = open(cfg.report_path(), "rb").read()
    same = first == second and json.loads(first)["complete"]

    rng = np.random.default_rng(9)
    masks = [rng.random((64, 64)) < p for p in (0.1, 0.5, 0.9)]
    yy, xx = np.mgrid[:128, :128]
    masks += [(yy - 64) ** 2 + (xx - 64) ** 2 < 40 ** 2, (yy // 8) * 8 < xx, np.ones((32, 32), bool), np.zeros((32, 32), bool)]
    touched = 0
    for m in masks:
        for band in (1, 3, 7):
            out = refine.refine_mask_classical(m, band)
            touched += int((out != m)[~refine.edge_mask(m, band)].sum())
    ok = same and touched == 0
    verdict(9, ok, f"identical report bytes={same}, pixels changed outside band={touched} over {3 * len(masks)} cases")
