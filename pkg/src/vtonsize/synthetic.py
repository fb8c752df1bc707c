"""Programmatic garment renders with known dimensions.

Used by the test-suite and the demos to exercise the measurement pipeline
end to end without a generative model. A scene is an upright top: a body
whose upper half has the shoulder width and lower half the waist width,
and two vertical sleeves hanging beside it with a gap, so the label map
can separate torso and arms regardless of size level.
"""

from dataclasses import dataclass, field
import json
import math
import os

import numpy as np

from . import imaging
from .io import write_label_map, write_mask, write_rgb
from .measure import DIMENSIONS
from .pose import BODY25, PoseKeypoints, save_keypoints

BACKGROUND = (0.92, 0.92, 0.92)
GARMENT = (0.20, 0.35, 0.60)
SKIN = (0.87, 0.70, 0.58)

# LIP indices written into synthetic label maps
LABEL_TORSO = 5
LABEL_LEFT_ARM = 14
LABEL_RIGHT_ARM = 15
LABEL_HEAD = 13


@dataclass(frozen=True)
class Layout:
    """Canvas geometry in pixels; the garment is centred horizontally."""

    height: int = 1024
    width: int = 768
    cm_per_pixel: float = 0.125
    top: int = 100
    torso_half: int = 205
    gap: int = 24
    sleeve_width: int = 100
    mask_margin: int = 6

    @property
    def cx(self):
        return self.width // 2


@dataclass
class Scene:
    rgb: np.ndarray
    refined_mask: np.ndarray
    labels: np.ndarray
    body: np.ndarray
    left_sleeve: np.ndarray
    right_sleeve: np.ndarray
    dims_px: dict
    segments: list = field(default_factory=list)

    @property
    def garment(self):
        return self.body | self.left_sleeve | self.right_sleeve


def size_ladder(base_cm, steps_cm=(3.0, 1.0, 2.0, 3.0)):
    """Dimensions for levels 1..3 stepping by ``steps_cm`` (CL, SL, SW, WW)."""
    step = dict(zip(DIMENSIONS, steps_cm))
    return {lvl: {d: base_cm[d] + (lvl - 1) * step[d] for d in DIMENSIONS} for lvl in (1, 2, 3)}


def _px(cm, layout):
    return int(math.floor(cm / layout.cm_per_pixel + 0.5))


def garment_geometry(dims_cm, layout):
    """Body and sleeve boxes ``(r0, r1, c0, c1)`` (half-open) in pixels."""
    cl, sl, sw, ww = (_px(dims_cm[d], layout) for d in DIMENSIONS)
    t, cx = layout.top, layout.cx
    split = t + cl // 2
    upper = (t, split, cx - sw // 2, cx - sw // 2 + sw)
    lower = (split, t + cl, cx - ww // 2, cx - ww // 2 + ww)
    lx1 = cx - layout.torso_half - layout.gap
    left = (t, t + sl, lx1 - layout.sleeve_width, lx1)
    rx0 = cx + layout.torso_half + layout.gap
    right = (t, t + sl, rx0, rx0 + layout.sleeve_width)
    return {"upper": upper, "lower": lower, "left": left, "right": right,
            "px": {"cl": cl, "sl": sl, "sw": sw, "ww": ww}}


def _box(shape, box):
    m = np.zeros(shape, dtype=bool)
    r0, r1, c0, c1 = box
    m[max(r0, 0):r1, max(c0, 0):c1] = True
    return m


def label_map(layout):
    """Label map shared by all size levels of one synthetic person."""
    lab = np.zeros((layout.height, layout.width), dtype=np.uint8)
    cx, th, g = layout.cx, layout.torso_half, layout.gap
    lab[: layout.top, cx - 60:cx + 60] = LABEL_HEAD
    lab[layout.top - 10:, cx - th - g // 2:cx + th + g // 2] = LABEL_TORSO
    # image left is the person's right
    lab[layout.top - 10:, : cx - th - g // 2] = LABEL_RIGHT_ARM
    lab[layout.top - 10:, cx + th + g // 2:] = LABEL_LEFT_ARM
    return lab


def ridge_layer(shape, segments, width=1.5):
    """Sum of Gaussian-profile line segments ``(row, col, angle_deg, length)``.

    Angles are measured anticlockwise from the image x axis.
    """
    out = np.zeros(shape, dtype=np.float64)
    reach = int(math.ceil(4 * width))
    for (cy, cx, ang, length) in segments:
        t = math.radians(ang)
        ux, uy = math.cos(t), -math.sin(t)
        hx, hy = abs(ux) * length / 2, abs(uy) * length / 2
        r0 = max(int(cy - hy) - reach, 0)
        r1 = min(int(cy + hy) + reach + 2, shape[0])
        c0 = max(int(cx - hx) - reach, 0)
        c1 = min(int(cx + hx) + reach + 2, shape[1])
        yy, xx = np.mgrid[r0:r1, c0:c1].astype(np.float64)
        rx, ry = xx - cx, yy - cy
        a = np.clip(rx * ux + ry * uy, -length / 2, length / 2)
        d2 = (rx - a * ux) ** 2 + (ry - a * uy) ** 2
        out[r0:r1, c0:c1] = np.maximum(out[r0:r1, c0:c1], np.exp(-d2 / (2 * width * width)))
    return out


def render(dims_cm, layout=Layout(), segments=(), amplitude=0.3, ridge_width=1.5):
    """Render one generated try-on image with its refined mask and label map."""
    shape = (layout.height, layout.width)
    geo = garment_geometry(dims_cm, layout)
    body = _box(shape, geo["upper"]) | _box(shape, geo["lower"])
    left = _box(shape, geo["left"])
    right = _box(shape, geo["right"])
    garment = body | left | right
    rgb = np.empty(shape + (3,), dtype=np.float64)
    rgb[:] = BACKGROUND
    rgb[garment] = GARMENT
    if segments:
        ridges = ridge_layer(shape, segments, ridge_width) * garment
        rgb += amplitude * ridges[..., None]
    rgb = np.clip(rgb, 0.0, 1.0)
    refined = imaging.dilate(garment, imaging.disk(layout.mask_margin)) if layout.mask_margin else garment.copy()
    return Scene(
        rgb=rgb,
        refined_mask=refined,
        labels=label_map(layout),
        body=body,
        left_sleeve=right,  # image right is the person's left
        right_sleeve=left,
        dims_px=geo["px"],
        segments=list(segments),
    )


def wrinkle_segments(dims_cm, layout, total_px, dims=DIMENSIONS, spacing_min=14):
    """Parallel ridges totalling ``total_px`` of length per requested dimension.

    CL ridges run horizontally across the left half of the body (zones A
    and B), SW and WW ridges vertically in the right half of the upper and
    lower body, SL ridges horizontally across both sleeves. Each group is
    kept clear of zone boundaries.
    """
    geo = garment_geometry(dims_cm, layout)
    segs = []
    t, cx = layout.top, layout.cx
    pad = 12
    cl_px = geo["px"]["cl"]
    split = t + cl_px // 2

    def spread(lo, hi, n):
        if n <= 0:
            return []
        step = (hi - lo) / n
        if step < spacing_min:
            raise ValueError(f"{n} ridges do not fit in {hi - lo}px at spacing {spacing_min}")
        return [lo + step * (k + 0.5) for k in range(n)]

    def count_and_length(budget, max_len):
        n = int(math.ceil(budget / max_len))
        return n, budget / n

    if "cl" in dims:
        c0 = cx - min(geo["upper"][3] - geo["upper"][2], geo["lower"][3] - geo["lower"][2]) // 2 + pad
        c1 = cx - pad
        n, length = count_and_length(total_px, c1 - c0)
        for r in spread(t + pad, t + cl_px - pad, n):
            segs.append((r, (c0 + c1) / 2, 0.0, length))
    for dim, (r0, r1), box in (("sw", (t, split), geo["upper"]), ("ww", (split, t + cl_px), geo["lower"])):
        if dim not in dims:
            continue
        c0, c1 = cx + pad, box[3] - pad
        n, length = count_and_length(total_px, r1 - r0 - 2 * pad)
        for c in spread(c0, c1, n):
            segs.append(((r0 + r1) / 2, c, 90.0, length))
    if "sl" in dims:
        half = total_px / 2
        for key in ("left", "right"):
            r0, r1, c0, c1 = geo[key]
            n, length = count_and_length(half, c1 - c0 - 2 * pad)
            for r in spread(r0 + pad, r1 - pad, n):
                segs.append((r, (c0 + c1) / 2, 0.0, length))
    return segs


def keypoints_for(dims_cm, layout):
    """Plausible BODY-25 keypoints for the tight (level 1) garment."""
    geo = garment_geometry(dims_cm, layout)
    pts = np.zeros((25, 3))
    t = layout.top
    lc = (geo["left"][2] + geo["left"][3]) / 2
    rc = (geo["right"][2] + geo["right"][3]) / 2
    pts[1] = (layout.cx, t, 0.9)  # neck
    pts[2] = (lc, t + 10, 0.9)  # right shoulder (image left)
    pts[BODY25["right_elbow"]] = (lc, t + geo["px"]["sl"] * 0.55, 0.9)
    pts[BODY25["right_wrist"]] = (geo["lower"][2], t + geo["px"]["sl"], 0.9)
    pts[5] = (rc, t + 10, 0.9)
    pts[BODY25["left_elbow"]] = (rc, t + geo["px"]["sl"] * 0.55, 0.9)
    pts[7] = (geo["lower"][3], t + geo["px"]["sl"], 0.9)
    pts[8] = (layout.cx, t + geo["px"]["cl"] * 0.9, 0.9)
    pts[BODY25["right_hip"]] = (layout.cx - 60, t + geo["px"]["cl"] * 0.9, 0.9)
    pts[12] = (layout.cx + 60, t + geo["px"]["cl"] * 0.9, 0.9)
    return PoseKeypoints(pts)


def person_image(dims_cm, layout):
    """Person render for mask generation: skin silhouette wearing the level-1 garment."""
    scene = render(dims_cm, layout)
    rgb = scene.rgb.copy()
    skin = (scene.labels != 0) & ~scene.garment
    skin[layout.top + int(scene.dims_px["cl"] * 1.1):] = False
    rgb[skin] = SKIN
    return rgb, scene.garment


def write_dataset(root, base_cms, layout=Layout(), wrinkles_px=0.0, wrinkle_dims=DIMENSIONS):
    """Write a complete evaluation dataset and return the manifest path.

    One record per entry of ``base_cms`` (level-1 dimensions in cm). Each
    record gets a person image, tight mask, keypoints, label map, garment
    image, per-level generated images and refined masks, so both mask
    generation and evaluation can run from the manifest.
    """
    os.makedirs(root, exist_ok=True)
    lines = []
    for k, base in enumerate(base_cms):
        rid = f"p{k:03d}"
        d = os.path.join(root, rid)
        os.makedirs(d, exist_ok=True)
        ladder = size_ladder(base)
        person, mo = person_image(ladder[1], layout)
        write_rgb(os.path.join(d, "person.png"), person)
        write_mask(os.path.join(d, "mask.png"), mo)
        save_keypoints(os.path.join(d, "keypoints.json"), [keypoints_for(ladder[1], layout)])
        write_label_map(os.path.join(d, "parse.png"), label_map(layout))
        garment = np.ones((256, 192, 3)) * np.array(GARMENT)
        write_rgb(os.path.join(d, "garment.png"), garment)
        generated, refined = {}, {}
        for lvl in (1, 2, 3):
            segs = wrinkle_segments(ladder[lvl], layout, wrinkles_px, wrinkle_dims) if wrinkles_px else ()
            sc = render(ladder[lvl], layout, segs)
            write_rgb(os.path.join(d, f"Y{lvl}.png"), sc.rgb)
            write_mask(os.path.join(d, f"M{lvl}.png"), sc.refined_mask)
            generated[str(lvl)] = f"{rid}/Y{lvl}.png"
            refined[str(lvl)] = f"{rid}/M{lvl}.png"
        lines.append({
            "id": rid,
            "person": f"{rid}/person.png",
            "mask": f"{rid}/mask.png",
            "keypoints": f"{rid}/keypoints.json",
            "label_map": f"{rid}/parse.png",
            "garment": f"{rid}/garment.png",
            "scale": layout.cm_per_pixel,
            "generated": generated,
            "refined_masks": refined,
        })
    path = os.path.join(root, "manifest.jsonl")
    with open(path, "w") as f:
        for rec in lines:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return path
