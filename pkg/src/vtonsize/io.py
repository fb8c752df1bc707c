"""PNG and JSON file helpers."""

import io
import json
import os
import tempfile

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def read_mask(path):
    """Single-channel PNG to a bool mask (nonzero is foreground)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def mask_to_png_bytes(mask):
    buf = io.BytesIO()
    Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_mask(data):
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L")) > 127


def write_mask(path, mask):
    atomic_write_bytes(path, mask_to_png_bytes(mask))


def read_rgb(path):
    """8-bit RGB PNG to float ``(H, W, 3)`` in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def rgb_to_png_bytes(rgb):
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_rgb(data):
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_rgb(path, rgb):
    atomic_write_bytes(path, rgb_to_png_bytes(rgb))


def read_label_map(path):
    """Paletted or grayscale PNG of label indices."""
    with Image.open(path) as im:
        if im.mode not in ("P", "L", "I", "I;16"):
            raise InvalidInputError(f"{path}: label map must be single-channel, got mode {im.mode}")
        return np.asarray(im).astype(np.int32)


def write_label_map(path, labels):
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > 255:
        raise InvalidInputError("label indices must fit in 0..255")
    im = Image.fromarray(arr.astype(np.uint8), mode="P")
    rng = np.random.default_rng(0)
    palette = rng.integers(0, 256, size=(256, 3), dtype=np.uint8)
    palette[0] = 0
    im.putpalette(palette.ravel().tolist())
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def atomic_write_bytes(path, data):
    """Write to a sibling temp file, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj):
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write_json(path, obj):
    atomic_write_bytes(path, dumps_json(obj).encode("utf-8"))
