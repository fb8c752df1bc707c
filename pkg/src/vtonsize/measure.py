"""Garment extraction and the four garment dimensions.

CL (clothing length), SL (sleeve length), SW (shoulder width) and WW
(waist width) are measured on the body and sleeve regions of a generated
try-on image and converted from pixels to centimetres.
"""

from dataclasses import dataclass, field, replace
import math
import re

import numpy as np

from . import imaging
from .errors import ConfigurationError, InvalidInputError, MeasurementImpossibleError

DIMENSIONS = ("cl", "sl", "sw", "ww")

SEMANTIC_NAMES = ("background", "torso", "left_arm", "right_arm", "head", "lower_body", "other")

# LIP / VITON-HD human-parse indices
_LIP = {
    0: "background", 1: "head", 2: "head", 3: "other", 4: "head", 5: "torso",
    6: "torso", 7: "torso", 8: "lower_body", 9: "lower_body", 10: "torso",
    11: "other", 12: "lower_body", 13: "head", 14: "left_arm", 15: "right_arm",
    16: "lower_body", 17: "lower_body", 18: "lower_body", 19: "lower_body",
}


@dataclass(frozen=True)
class LabelSchema:
    """Mapping from label index to a semantic name in ``SEMANTIC_NAMES``."""

    names: dict

    def __post_init__(self):
        bad = sorted({v for v in self.names.values() if v not in SEMANTIC_NAMES})
        if bad:
            raise ConfigurationError(f"unknown semantic names in label schema: {bad}")

    def indices(self, name):
        return sorted(i for i, n in self.names.items() if n == name)

    @classmethod
    def parse(cls, text):
        """Parse ``index name`` lines (``:`` or ``=`` also accepted, ``#`` comments)."""
        names = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = re.fullmatch(r"(\d+)\s*[:=\s]\s*([A-Za-z_]+)", line)
            if not m:
                raise ConfigurationError(f"label schema line {lineno}: cannot parse {raw!r}")
            names[int(m.group(1))] = m.group(2).lower()
        return cls(names)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.parse(f.read())

    def dumps(self):
        return "".join(f"{i} {n}\n" for i, n in sorted(self.names.items()))


DEFAULT_SCHEMA = LabelSchema(dict(_LIP))


@dataclass(frozen=True)
class GarmentRegions:
    body: np.ndarray
    left_sleeve: np.ndarray
    right_sleeve: np.ndarray

    @property
    def sleeves(self):
        return self.left_sleeve | self.right_sleeve


@dataclass(frozen=True)
class PixelScale:
    cm_per_pixel: float
    source: str = "explicit"

    def __post_init__(self):
        v = self.cm_per_pixel
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise InvalidInputError(f"cm_per_pixel must be a positive finite number, got {v!r}")

    @classmethod
    def from_person_height(cls, height_cm, pixel_height):
        if pixel_height <= 0:
            raise InvalidInputError(f"person pixel height must be positive, got {pixel_height}")
        return cls(float(height_cm) / float(pixel_height), "person-height-derived")


@dataclass(frozen=True)
class Measurement:
    """CL/SL/SW/WW in ``unit`` with per-dimension validity flags.

    Invalid dimensions hold 0.0. ``sl`` is the longer of the two sleeves;
    ``sl_left``/``sl_right`` keep the individual values.
    """

    cl: float
    sl: float
    sw: float
    ww: float
    valid: dict = field(default_factory=lambda: {d: True for d in DIMENSIONS})
    unit: str = "px"
    sl_left: float = 0.0
    sl_right: float = 0.0

    def get(self, dim):
        return getattr(self, dim)

    def scaled(self, factor, unit):
        return replace(
            self,
            cl=self.cl * factor, sl=self.sl * factor, sw=self.sw * factor, ww=self.ww * factor,
            sl_left=self.sl_left * factor, sl_right=self.sl_right * factor,
            valid=dict(self.valid), unit=unit,
        )

    def as_dict(self):
        return {
            "unit": self.unit,
            **{d: float(getattr(self, d)) for d in DIMENSIONS},
            "sl_left": float(self.sl_left),
            "sl_right": float(self.sl_right),
            "valid": {d: bool(self.valid[d]) for d in DIMENSIONS},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            cl=d["cl"], sl=d["sl"], sw=d["sw"], ww=d["ww"], valid=dict(d["valid"]),
            unit=d.get("unit", "px"), sl_left=d.get("sl_left", 0.0), sl_right=d.get("sl_right", 0.0),
        )


def median_background(generated, mask):
    """Background predicate: within-tolerance of the median colour outside ``mask``."""
    outside = ~mask
    if not outside.any():
        return None
    return np.median(generated[outside], axis=0)


def extract_garment(generated, refined_mask, tolerance=0.12, background=None):
    """Garment support inside ``refined_mask``.

    Parameters
    ----------
    generated : ndarray, (H, W, 3) float in [0, 1]
    refined_mask : ndarray of bool, (H, W)
    tolerance : float
        Euclidean RGB distance under which a pixel counts as background.
    background : callable, optional
        ``background(generated, mask) -> bool array`` replacing the default
        median-colour rule.
    """
    img = np.asarray(generated, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    m = imaging.as_mask(refined_mask)
    if img.shape[:2] != m.shape:
        raise InvalidInputError(f"generated image {img.shape[:2]} and mask {m.shape} differ in size")
    if not m.any():
        return m.copy()
    if background is not None:
        is_bg = np.asarray(background(img, m), dtype=bool)
    else:
        ref = median_background(img, m)
        if ref is None:
            return m.copy()
        is_bg = np.linalg.norm(img - ref, axis=2) <= tolerance
    return m & ~is_bg


def split_regions(ic, yp, schema=DEFAULT_SCHEMA):
    """Split the garment support into body and left/right sleeve regions."""
    ic = imaging.as_mask(ic)
    yp = np.asarray(yp)
    if yp.shape != ic.shape:
        raise InvalidInputError(f"label map {yp.shape} and garment support {ic.shape} differ in size")
    roles = {}
    for role in ("torso", "left_arm", "right_arm"):
        idx = schema.indices(role)
        if not idx:
            raise ConfigurationError(f"label schema declares no {role!r} label")
        roles[role] = np.isin(yp, idx)
    unknown = np.setdiff1d(np.unique(yp), list(schema.names))
    if unknown.size:
        raise InvalidInputError(f"label map uses indices missing from the schema: {unknown.tolist()}")
    return GarmentRegions(
        body=ic & roles["torso"],
        left_sleeve=ic & roles["left_arm"],
        right_sleeve=ic & roles["right_arm"],
    )


def _row_widths(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    widths = []
    for r in rows:
        cols = np.flatnonzero(mask[r])
        widths.append(cols[-1] - cols[0] + 1)
    return rows, np.asarray(widths, dtype=np.float64)


def _band_count(n_rows, fraction):
    return max(1, int(math.floor(fraction * n_rows + 0.5)))


def clothing_length(body):
    """Length of the vertical run through the body centroid column."""
    rr, cc = np.nonzero(body)
    cy, cx = rr.mean(), cc.mean()
    col = body[:, int(math.floor(cx + 0.5))]
    idx = np.flatnonzero(col)
    if idx.size == 0:
        return float(rr.max() - rr.min() + 1)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    for run in runs:
        if run[0] <= cy <= run[-1]:
            return float(run[-1] - run[0] + 1)
    return float(max(run[-1] - run[0] + 1 for run in runs))


def axis_extent(mask):
    """Extent of a region along its principal axis, pixel footprint included."""
    rr, cc = np.nonzero(mask)
    if rr.size == 0:
        return 0.0
    if rr.size == 1:
        return 1.0
    y = rr - rr.mean()
    x = cc - cc.mean()
    cov = np.array([[np.mean(x * x), np.mean(x * y)], [np.mean(x * y), np.mean(y * y)]])
    _, vecs = np.linalg.eigh(cov)
    ux, uy = vecs[:, -1]
    proj = x * ux + y * uy
    return float(proj.max() - proj.min() + 1.0)


def measure(regions, shoulder_fraction=0.05, waist_fraction=0.10):
    """CL, SL, SW and WW of one garment, in pixels.

    CL is the vertical run through the body centroid column; SW and WW
    average the row widths over the top ``shoulder_fraction`` and bottom
    ``waist_fraction`` of body rows; SL is the principal-axis extent of the
    longer sleeve. A garment without sleeve pixels gets ``sl`` flagged
    invalid.
    """
    body = imaging.as_mask(regions.body)
    if not body.any():
        raise MeasurementImpossibleError("body region is empty")
    rows, widths = _row_widths(body)
    k_top = _band_count(rows.size, shoulder_fraction)
    k_bot = _band_count(rows.size, waist_fraction)
    sl_left = axis_extent(imaging.as_mask(regions.left_sleeve))
    sl_right = axis_extent(imaging.as_mask(regions.right_sleeve))
    sl = max(sl_left, sl_right)
    return Measurement(
        cl=clothing_length(body),
        sl=sl,
        sw=float(widths[:k_top].mean()),
        ww=float(widths[-k_bot:].mean()),
        valid={"cl": True, "sl": sl > 0, "sw": True, "ww": True},
        unit="px",
        sl_left=sl_left,
        sl_right=sl_right,
    )


def to_cm(raw, scale):
    if raw.unit != "px":
        raise InvalidInputError(f"expected a pixel measurement, got unit {raw.unit!r}")
    return raw.scaled(scale.cm_per_pixel, "cm")


def to_px(cm, scale):
    if cm.unit != "cm":
        raise InvalidInputError(f"expected a centimetre measurement, got unit {cm.unit!r}")
    return cm.scaled(1.0 / scale.cm_per_pixel, "px")
