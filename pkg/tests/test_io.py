import json
import os

import numpy as np
import pytest

from vtonsize import io
from vtonsize.errors import InvalidInputError


def test_mask_roundtrip(tmp_path):
    m = np.random.default_rng(0).random((17, 23)) < 0.4
    io.write_mask(tmp_path / "m.png", m)
    np.testing.assert_array_equal(io.read_mask(tmp_path / "m.png"), m)
    np.testing.assert_array_equal(io.png_bytes_to_mask(io.mask_to_png_bytes(m)), m)


def test_rgb_roundtrip_quantised(tmp_path):
    rgb = np.random.default_rng(1).random((9, 11, 3))
    io.write_rgb(tmp_path / "c.png", rgb)
    back = io.read_rgb(tmp_path / "c.png")
    assert np.abs(back - rgb).max() <= 0.5 / 255 + 1e-12
    gray = io.png_bytes_to_rgb(io.rgb_to_png_bytes(rgb[..., 0]))
    assert gray.shape == (9, 11, 3)


def test_label_map_roundtrip(tmp_path):
    lab = np.random.default_rng(2).integers(0, 20, (12, 8))
    io.write_label_map(tmp_path / "l.png", lab)
    np.testing.assert_array_equal(io.read_label_map(tmp_path / "l.png"), lab)
    with pytest.raises(InvalidInputError):
        io.write_label_map(tmp_path / "bad.png", np.full((2, 2), 300))


def test_label_map_rejects_rgb(tmp_path):
    io.write_rgb(tmp_path / "c.png", np.zeros((4, 4, 3)))
    with pytest.raises(InvalidInputError):
        io.read_label_map(tmp_path / "c.png")


def test_atomic_write_leaves_no_temp(tmp_path):
    io.atomic_write_json(tmp_path / "sub" / "r.json", {"b": 1, "a": [1.5]})
    assert os.listdir(tmp_path / "sub") == ["r.json"]
    text = (tmp_path / "sub" / "r.json").read_text()
    assert text == io.dumps_json({"a": [1.5], "b": 1}) and text.endswith("\n")
    assert json.loads(text) == {"a": [1.5], "b": 1}


def test_atomic_write_failure_keeps_old(tmp_path):
    target = tmp_path / "r.json"
    io.atomic_write_json(target, {"ok": True})
    with pytest.raises(ValueError):
        io.atomic_write_json(target, {"x": float("nan")})
    assert json.loads(target.read_text()) == {"ok": True}
    assert os.listdir(tmp_path) == ["r.json"]
