"""Multi-size coarse masks from a tight garment mask and body keypoints.

The tight mask ``mo`` is grown by smoothing, repeated dilation and closing,
then extended downward by a keypoint rectangle anchored at the right wrist
and right elbow. Size level 1 returns ``mo`` untouched.
"""

from dataclasses import dataclass, field
from enum import IntEnum
import json
import math

import numpy as np
from scipy import ndimage

from . import imaging
from .errors import InvalidInputError, MeasurementImpossibleError

# BODY-25 joint indices used by the mask construction
BODY25 = {
    "right_elbow": 3,
    "right_wrist": 4,
    "left_elbow": 6,
    "right_hip": 9,
}

MIN_CONFIDENCE = 0.05
STEPS_PER_LEVEL = 5
EXTENSION_FACTOR = 0.8
GARMENT_STRETCH = 1.2


class SizeLevel(IntEnum):
    A1 = 1
    A2 = 2
    A3 = 3

    @property
    def label(self):
        return {1: "tight", 2: "fitted", 3: "loose"}[int(self)]

    @classmethod
    def coerce(cls, level):
        try:
            return cls(int(level))
        except (ValueError, TypeError):
            raise InvalidInputError(f"size level must be 1, 2 or 3, got {level!r}") from None


@dataclass(frozen=True)
class PoseKeypoints:
    """Body keypoints as an ``(N, 3)`` array of ``(x, y, confidence)`` rows.

    ``index_map`` names the joints the mask builder needs; it defaults to
    BODY-25 numbering and can be replaced for other skeletons.
    """

    points: np.ndarray
    index_map: dict = field(default_factory=lambda: dict(BODY25))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            if pts.size % 3:
                raise InvalidInputError(f"flat keypoint list length {pts.size} is not a multiple of 3")
            pts = pts.reshape(-1, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"keypoints must have shape (N, 3), got {pts.shape}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_flat(cls, flat, index_map=None):
        return cls(np.asarray(flat, dtype=np.float64), dict(index_map or BODY25))

    def index_of(self, name):
        return self.index_map[name]

    def xy(self, name):
        """``(x, y)`` of a named joint; raises if absent or low-confidence."""
        idx = self.index_map.get(name)
        if idx is None:
            raise MeasurementImpossibleError(f"no index mapped for joint {name!r}")
        if idx >= len(self.points):
            raise MeasurementImpossibleError(f"keypoint {idx} ({name}) is missing")
        x, y, conf = self.points[idx]
        if not (conf >= MIN_CONFIDENCE) or not (math.isfinite(x) and math.isfinite(y)):
            raise MeasurementImpossibleError(f"keypoint {idx} ({name}) is missing (confidence {conf:.3f})")
        return float(x), float(y)

    def to_flat(self):
        return [float(v) for v in self.points.ravel()]


def load_keypoints(path, person=0, index_map=None):
    """Read one person's keypoints from a pose-estimator JSON document.

    Accepts the usual ``{"people": [{"pose_keypoints_2d": [...]}, ...]}``
    layout as well as a bare flat list.
    """
    with open(path, "r") as f:
        data = json.load(f)
    if isinstance(data, list):
        flat = data
    else:
        people = data.get("people", [])
        if len(people) <= person:
            raise MeasurementImpossibleError(f"{path}: no person #{person} in keypoint file")
        flat = people[person].get("pose_keypoints_2d")
        if flat is None:
            raise MeasurementImpossibleError(f"{path}: person #{person} has no pose_keypoints_2d")
    return PoseKeypoints.from_flat(flat, index_map)


def save_keypoints(path, keypoints_list):
    doc = {"version": 1.3, "people": [{"pose_keypoints_2d": kp.to_flat()} for kp in keypoints_list]}
    with open(path, "w") as f:
        json.dump(doc, f)


def _round(v):
    # half-up, unlike round()'s banker's rounding
    return int(math.floor(v + 0.5))


def extension_rectangle(shape, kp, level):
    """Keypoint rectangle for ``level``, clipped to the raster.

    Columns span ``[x4, x4 + |x6 - x3|]`` and rows span
    ``[y3, y3 + 0.8 (level - 1) |y9 - y3|]``, both inclusive.
    """
    level = SizeLevel.coerce(level)
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    if level == SizeLevel.A1:
        return out
    x3, y3 = kp.xy("right_elbow")
    x4, _ = kp.xy("right_wrist")
    x6, _ = kp.xy("left_elbow")
    _, y9 = kp.xy("right_hip")
    c0 = _round(x4)
    c1 = c0 + _round(abs(x6 - x3))
    r0 = _round(y3)
    r1 = r0 + _round(EXTENSION_FACTOR * (level - 1) * abs(y9 - y3))
    c0, c1 = max(c0, 0), min(c1, w - 1)
    r0, r1 = max(r0, 0), min(r1, h - 1)
    if c0 <= c1 and r0 <= r1:
        out[r0:r1 + 1, c0:c1 + 1] = True
    return out


def grown_mask(mo, level, se=imaging.SQUARE3):
    """Smoothed, dilated and closed version of ``mo`` for ``level``."""
    level = SizeLevel.coerce(level)
    m = imaging.as_mask(mo)
    if level == SizeLevel.A1:
        return m.copy()
    n = STEPS_PER_LEVEL * (level - 1)
    base = imaging.gaussian5x5(m.astype(np.float64)) >= 0.5
    return imaging.closing(imaging.dilate(base, se, n), se, n)


def coarse_mask(mo, kp, level, se=imaging.SQUARE3):
    """Coarse try-on mask for one size level.

    Parameters
    ----------
    mo : array_like of bool
        Tight-fitting garment mask.
    kp : PoseKeypoints
    level : int or SizeLevel
        1 (tight), 2 (fitted) or 3 (loose).
    se : StructuringElement
        Element for the dilations and closings.

    Returns
    -------
    ndarray of bool
        ``mo`` itself for level 1. Otherwise the grown mask unioned with
        the keypoint extension rectangle and with ``mo``; the last union
        keeps specks that the 0.5 re-threshold deletes, so the levels
        stay nested.
    """
    level = SizeLevel.coerce(level)
    m = imaging.as_mask(mo)
    if m.size == 0:
        raise InvalidInputError("tight mask is empty")
    if level == SizeLevel.A1:
        return m.copy()
    rect = extension_rectangle(m.shape, kp, level)
    return grown_mask(m, level, se) | rect | m


def multi_size_masks(mo, kp, se=imaging.SQUARE3):
    """Coarse masks for levels 1, 2 and 3, nested by construction."""
    return tuple(coarse_mask(mo, kp, level, se) for level in SizeLevel)


def adjust_garment(c, level, stretch=GARMENT_STRETCH):
    """Garment image for a size level.

    Level 1 returns the image unchanged; levels 2 and 3 stretch it
    vertically to ``round(H * stretch)`` rows with bilinear sampling.
    """
    level = SizeLevel.coerce(level)
    img = np.asarray(c, dtype=np.float64)
    if img.ndim not in (2, 3) or img.shape[0] == 0 or img.shape[1] == 0:
        raise InvalidInputError(f"garment image must be non-empty (H, W[, C]), got shape {img.shape}")
    if level == SizeLevel.A1:
        return img.copy()
    h, w = img.shape[:2]
    new_h = _round(h * stretch)
    # pixel-centre aligned source rows
    src_r = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    src_c = np.arange(w, dtype=np.float64)
    rr, cc = np.meshgrid(src_r, src_c, indexing="ij")
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [rr, cc], order=1, mode="nearest")
    chans = [ndimage.map_coordinates(img[..., k], [rr, cc], order=1, mode="nearest") for k in range(img.shape[2])]
    return np.stack(chans, axis=-1)
