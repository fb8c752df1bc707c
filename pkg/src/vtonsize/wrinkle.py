"""Wrinkle detection and wrinkle-based size compensation.

Wrinkles shorten the apparent garment dimensions. Ridge-like structures
are extracted with a Frangi branch (after grayscale closing) and a Gabor
branch (after grayscale opening), fused, binarized, and each connected
component is routed to one dimension by its orientation and body zone:

=============  ===========  ===========
orientation    zone         dimension
=============  ===========  ===========
[0, 45)        A or B       CL
[45, 90]       A            SW
[45, 90]       B            WW
[0, 45)        C            SL
=============  ===========  ===========

Zone A is the upper half of the body, B the lower half, C the sleeves.
The skeleton length ``L`` gathered per dimension drives a piecewise
compensation ratio that inflates the measured dimension.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from . import imaging
from .errors import InvalidInputError
from .measure import DIMENSIONS, Measurement

log = logging.getLogger(__name__)

ZONES = ("A", "B", "C")


@dataclass(frozen=True)
class CompensationThresholds:
    """Breakpoints of the compensation ratio, in pixels of wrinkle length."""

    a: float = 5000.0
    b: float = 10000.0
    c: float = 15000.0
    d: float = 20000.0

    def __post_init__(self):
        if not (0 <= self.a < self.b < self.c < self.d):
            raise InvalidInputError(f"thresholds must satisfy 0 <= a < b < c < d, got {self}")


DEFAULT_THRESHOLDS = CompensationThresholds()


def compensation_ratio(length, t=DEFAULT_THRESHOLDS):
    """Size compensation ratio for a total wrinkle length, as a fraction.

    Piecewise linear in percent with slopes 1/250, 1/200 and 1/250 per
    pixel between the breakpoints, zero below ``a`` and saturating to
    100 % from ``d`` on. The ratio jumps from 65 % to 100 % at ``d`` with
    the default breakpoints.
    """
    if not math.isfinite(length) or length < 0:
        raise InvalidInputError(f"wrinkle length must be a finite non-negative number, got {length}")
    if length < t.a:
        pct = 0.0
    elif length < t.b:
        pct = (length - t.a) / 250.0
    elif length < t.c:
        pct = (t.b - t.a) / 250.0 + (length - t.b) / 200.0
    elif length < t.d:
        pct = (t.b - t.a) / 250.0 + (t.c - t.b) / 200.0 + (length - t.c) / 250.0
    else:
        return 1.0
    return pct / 100.0


def compensated_length(measured, length, t=DEFAULT_THRESHOLDS, mode="inflate"):
    """Wrinkle-compensated dimension.

    ``mode="inflate"`` (default) returns ``measured * (1 + R(length))``.
    ``mode="literal"`` returns ``length * (1 + R(length))``, i.e. the
    wrinkle length itself inflated, for comparison with that reading of
    the compensation rule.
    """
    if measured < 0:
        raise InvalidInputError(f"measured length must be non-negative, got {measured}")
    r = compensation_ratio(length, t)
    if mode == "inflate":
        return measured + measured * r
    if mode == "literal":
        return length + length * r
    raise InvalidInputError(f"unknown compensation mode {mode!r}")


@dataclass(frozen=True)
class WrinkleZones:
    region_a: np.ndarray
    region_b: np.ndarray
    region_c: np.ndarray

    def as_tuple(self):
        return self.region_a, self.region_b, self.region_c


def make_zones(regions, split=0.5):
    """Zones from garment regions: body rows above/below ``split`` of the
    body's row span, and the sleeves."""
    body = imaging.as_mask(regions.body)
    a = np.zeros_like(body)
    b = np.zeros_like(body)
    rows = np.flatnonzero(body.any(axis=1))
    if rows.size:
        r0, r1 = rows[0], rows[-1]
        cut = r0 + int(math.floor(split * (r1 - r0 + 1) + 0.5))
        a[:cut] = body[:cut]
        b[cut:] = body[cut:]
    return WrinkleZones(a, b, imaging.as_mask(regions.sleeves) & ~body)


@dataclass(frozen=True)
class WrinkleConfig:
    fusion_weight: float = 0.5
    threshold: float = 0.2
    frangi_scales: tuple = (1.5, 2.5, 3.5)
    frangi_beta: float = 0.5
    frangi_c: float = 0.08
    gabor_orientations: tuple = tuple(22.5 * i for i in range(8))
    gabor_wavelength: float = 8.0
    gabor_sigma: float = 4.0
    se_radius: int = 1
    zone_split: float = 0.5
    length_smoothing: int = 5
    thresholds: CompensationThresholds = DEFAULT_THRESHOLDS
    compensation: str = "inflate"

    def __post_init__(self):
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise InvalidInputError(f"fusion_weight must lie in [0, 1], got {self.fusion_weight}")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidInputError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not 0.0 < self.zone_split < 1.0:
            raise InvalidInputError(f"zone_split must lie in (0, 1), got {self.zone_split}")


DEFAULT_CONFIG = WrinkleConfig()


def _margin(cfg):
    return int(math.ceil(4 * max(cfg.frangi_scales) + 3 * cfg.gabor_sigma)) + 2 * cfg.se_radius + 2


def wrinkle_response(img, zone, fusion_weight=None, cfg=DEFAULT_CONFIG):
    """Fused ridge response inside ``zone``, zero elsewhere.

    Pixels outside the zone are replaced by the zone's median intensity
    before filtering so the zone boundary itself does not read as a ridge.
    Work is confined to the zone's bounding box plus a filter margin, which
    leaves the in-zone values unchanged.
    """
    arr = imaging.as_gray(img)
    z = imaging.as_mask(zone)
    if z.shape != arr.shape:
        raise InvalidInputError(f"zone {z.shape} and image {arr.shape} differ in size")
    w = cfg.fusion_weight if fusion_weight is None else fusion_weight
    if not 0.0 <= w <= 1.0:
        raise InvalidInputError(f"fusion weight must lie in [0, 1], got {w}")
    out = np.zeros_like(arr)
    if not z.any():
        return out
    rows = np.flatnonzero(z.any(axis=1))
    cols = np.flatnonzero(z.any(axis=0))
    m = _margin(cfg)
    r0, r1 = max(rows[0] - m, 0), min(rows[-1] + m + 1, arr.shape[0])
    c0, c1 = max(cols[0] - m, 0), min(cols[-1] + m + 1, arr.shape[1])
    sub_z = z[r0:r1, c0:c1]
    sub = np.where(sub_z, arr[r0:r1, c0:c1], np.median(arr[z]))
    se = imaging.StructuringElement("square", cfg.se_radius)
    ridge = imaging.frangi(imaging.grey_closing(sub, se), cfg.frangi_scales, cfg.frangi_beta, cfg.frangi_c)
    if w < 1.0:
        texture = imaging.gabor_bank(imaging.grey_opening(sub, se), cfg.gabor_orientations, cfg.gabor_wavelength, cfg.gabor_sigma)
    else:
        texture = np.zeros_like(sub)
    fused = w * ridge + (1.0 - w) * texture
    out[r0:r1, c0:c1] = np.where(sub_z, fused, 0.0)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class WrinkleComponent:
    orientation: float
    zone: str
    length: float
    area: int
    centroid: tuple
    dimension: str = None

    def as_dict(self):
        return {
            "orientation": round(float(self.orientation), 6),
            "zone": self.zone,
            "length": round(float(self.length), 6),
            "area": int(self.area),
            "centroid": [round(float(v), 3) for v in self.centroid],
            "dimension": self.dimension,
        }


@dataclass(frozen=True)
class WrinkleReport:
    lengths: dict
    ratios: dict = field(default_factory=dict)
    components: tuple = ()

    def with_ratios(self, t=DEFAULT_THRESHOLDS):
        ratios = {d: compensation_ratio(self.lengths[d], t) for d in DIMENSIONS}
        return WrinkleReport(dict(self.lengths), ratios, self.components)

    def as_dict(self):
        return {
            "lengths": {d: float(self.lengths[d]) for d in DIMENSIONS},
            "ratios": {d: float(self.ratios.get(d, 0.0)) for d in DIMENSIONS},
            "components": [c.as_dict() for c in self.components],
        }


def route(orientation, zone):
    """Dimension a wrinkle feeds, or ``None`` if no rule matches.

    45 degrees exactly belongs to the steep class.
    """
    steep = orientation >= 45.0
    if zone in ("A", "B") and not steep:
        return "cl"
    if zone == "A":
        return "sw"
    if zone == "B":
        return "ww"
    if zone == "C" and not steep:
        return "sl"
    return None


def classify_wrinkles(response, zones, threshold=0.2, smoothing=5):
    """Binarize, split into components and sum skeleton length per dimension.

    A pixel is a wrinkle pixel when its response exceeds
    ``threshold * max(response)``. Each component's zone is decided by
    majority pixel vote; components touching no zone are dropped.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {threshold}")
    resp = imaging.as_gray(response)
    lengths = {d: 0.0 for d in DIMENSIONS}
    peak = resp.max()
    if peak <= 0:
        return WrinkleReport(lengths)
    binary = resp > threshold * peak
    za, zb, zc = (imaging.as_mask(z) for z in zones.as_tuple())
    inventory = []
    for comp in imaging.connected_components(binary, 8):
        votes = [int(z[comp.rows, comp.cols].sum()) for z in (za, zb, zc)]
        if max(votes) == 0:
            log.info("dropping wrinkle component at %s outside all zones", comp.centroid)
            continue
        zone = ZONES[int(np.argmax(votes))]
        r0, c0, r1, c1 = comp.bbox
        local = np.zeros((r1 - r0 + 3, c1 - c0 + 3), dtype=bool)
        local[comp.rows - r0 + 1, comp.cols - c0 + 1] = True
        length = imaging.skeleton_length(imaging.skeletonize(local), smoothing)
        dim = route(comp.orientation, zone)
        if dim is None:
            log.info("wrinkle component at %s (%.1f deg, zone %s) matches no rule", comp.centroid, comp.orientation, zone)
        else:
            lengths[dim] += length
        inventory.append(WrinkleComponent(comp.orientation, zone, length, comp.area, comp.centroid, dim))
    inventory.sort(key=lambda c: (c.centroid, c.orientation))
    return WrinkleReport(lengths, {}, tuple(inventory))


def analyze_wrinkles(gray, regions, cfg=DEFAULT_CONFIG):
    """Full wrinkle pass over one garment: zones, response, routing, ratios.

    The body and each sleeve are filtered separately.
    """
    zones = make_zones(regions, cfg.zone_split)
    resp = wrinkle_response(gray, zones.region_a | zones.region_b, cfg=cfg)
    for sleeve in (regions.left_sleeve, regions.right_sleeve):
        np.maximum(resp, wrinkle_response(gray, imaging.as_mask(sleeve) & zones.region_c, cfg=cfg), out=resp)
    report = classify_wrinkles(resp, zones, cfg.threshold, cfg.length_smoothing)
    return report.with_ratios(cfg.thresholds)


def compensate(raw, report, cfg=DEFAULT_CONFIG):
    """Apply each dimension's own compensation ratio to a measurement."""
    vals = {}
    for d in DIMENSIONS:
        vals[d] = compensated_length(raw.get(d), report.lengths[d], cfg.thresholds, cfg.compensation)
    scale_sl = vals["sl"] / raw.sl if raw.sl > 0 else 1.0
    return Measurement(
        cl=vals["cl"], sl=vals["sl"], sw=vals["sw"], ww=vals["ww"],
        valid=dict(raw.valid), unit=raw.unit,
        sl_left=raw.sl_left * scale_sl, sl_right=raw.sl_right * scale_sl,
    )
