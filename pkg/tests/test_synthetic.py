import json

import numpy as np
import pytest

from vtonsize import measure, pose, synthetic

from fixtures import WIDE_BASE, WIDE_LAYOUT


def test_ladder_steps():
    lad = synthetic.size_ladder({"cl": 65, "sl": 60, "sw": 40, "ww": 44})
    assert lad[3] == {"cl": 71, "sl": 62, "sw": 44, "ww": 50}


def test_render_measures_exactly():
    dims = {"cl": 65, "sl": 60, "sw": 40, "ww": 44}
    layout = synthetic.Layout()
    scene = synthetic.render(dims, layout)
    m = measure.measure(measure.GarmentRegions(scene.body, scene.left_sleeve, scene.right_sleeve))
    for d in measure.DIMENSIONS:
        assert m.get(d) == scene.dims_px[d] == round(dims[d] / layout.cm_per_pixel)
    assert not (scene.garment & ~scene.refined_mask).any()


def test_wrinkle_segments_fit_and_total():
    segs = synthetic.wrinkle_segments(WIDE_BASE, WIDE_LAYOUT, 7500)
    by_angle = {0.0: 0.0, 90.0: 0.0}
    for _, _, ang, length in segs:
        by_angle[ang] += length
    # CL plus SL horizontal, SW plus WW vertical
    assert by_angle[0.0] == pytest.approx(15000) and by_angle[90.0] == pytest.approx(15000)
    with pytest.raises(ValueError):
        synthetic.wrinkle_segments(WIDE_BASE, WIDE_LAYOUT, 7500, spacing_min=200)


def test_keypoints_cover_required_indices():
    kp = synthetic.keypoints_for({"cl": 65, "sl": 60, "sw": 40, "ww": 44}, synthetic.Layout())
    for name in ("right_elbow", "right_wrist", "left_elbow", "right_hip"):
        assert kp.points[pose.BODY25[name], 2] > 0.05


def test_write_dataset(tmp_path):
    path = synthetic.write_dataset(tmp_path, [{"cl": 65, "sl": 60, "sw": 40, "ww": 44}], synthetic.Layout(height=700, width=600, top=60, torso_half=150, gap=20, sleeve_width=60))
    (rec,) = [json.loads(line) for line in open(path)]
    assert rec["id"] == "p000" and set(rec["generated"]) == {"1", "2", "3"}
    for key in ("person", "mask", "keypoints", "label_map", "garment"):
        assert (tmp_path / rec[key]).exists()
    assert np.isclose(rec["scale"], 0.125)
