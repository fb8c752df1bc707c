"""Batch orchestration: configuration, manifests, and the five commands.

A run is driven by a line-delimited JSON manifest, one record per
person-garment pair::

    {"id": "p000", "person": "p000/person.png", "mask": "p000/mask.png",
     "keypoints": "p000/keypoints.json", "label_map": "p000/parse.png",
     "garment": "p000/garment.png", "scale": 0.125,
     "generated": {"1": "p000/Y1.png", ...},
     "refined_masks": {"1": "p000/M1.png", ...}}

Relative paths resolve against the manifest's directory. Every command
that produces files also writes ``<out>/manifest.jsonl`` with the new
paths filled in, so commands chain: gen-masks -> adjust-garment -> tryon
-> evaluate -> report.

Records are processed by a bounded thread pool; results are always
assembled in sorted record-id order so serial and parallel runs agree.
"""

from concurrent.futures import ThreadPoolExecutor
import csv
import dataclasses
from dataclasses import dataclass, field
import hashlib
import io as _io
import json
import logging
import math
import os
import time

import requests

from . import __version__, imaging, io, measure, pose, size_eval, wrinkle
from . import refine as refining
from .errors import BackendError, ConfigurationError, InvalidInputError, ReportParseError, VtonSizeError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENV_PREFIX = "VTONSIZE_"
METRICS = ("mae", "rmse", "mape", "smape")
CSV_FIELDS = ("pair", "dimension", "n") + METRICS


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """All knobs of a run.

    Values come from, in increasing priority: defaults, a JSON config
    file, ``VTONSIZE_<FIELD>`` environment variables, and command-line
    flags. See :func:`load_config`.
    """

    manifest: str = None
    out: str = "out"
    report: str = None
    sizes: tuple = (1, 2, 3)
    jobs: int = 1
    strict: bool = False
    cm_per_pixel: float = None
    label_schema: str = None
    # mask generation
    se_shape: str = "square"
    se_radius: int = 1
    refine: str = "classical"
    refine_url: str = None
    refine_fallback: bool = True
    band: int = refining.DEFAULT_BAND
    stretch: float = pose.GARMENT_STRETCH
    # try-on backend
    backend_url: str = None
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5
    # measurement
    bg_tolerance: float = 0.12
    shoulder_fraction: float = 0.05
    waist_fraction: float = 0.10
    # wrinkles
    wrinkles: bool = True
    fusion_weight: float = wrinkle.DEFAULT_CONFIG.fusion_weight
    wrinkle_threshold: float = wrinkle.DEFAULT_CONFIG.threshold
    frangi_scales: tuple = wrinkle.DEFAULT_CONFIG.frangi_scales
    frangi_beta: float = wrinkle.DEFAULT_CONFIG.frangi_beta
    frangi_c: float = wrinkle.DEFAULT_CONFIG.frangi_c
    gabor_orientations: tuple = wrinkle.DEFAULT_CONFIG.gabor_orientations
    gabor_wavelength: float = wrinkle.DEFAULT_CONFIG.gabor_wavelength
    gabor_sigma: float = wrinkle.DEFAULT_CONFIG.gabor_sigma
    zone_split: float = wrinkle.DEFAULT_CONFIG.zone_split
    length_smoothing: int = wrinkle.DEFAULT_CONFIG.length_smoothing
    compensation_thresholds: tuple = (5000.0, 10000.0, 15000.0, 20000.0)
    compensation: str = "inflate"
    # evaluation
    standard_increments: tuple = (3.0, 1.0, 2.0, 3.0)
    score_metric: str = "mae"
    weight_level: int = 1

    def as_dict(self):
        return {f.name: _jsonable(getattr(self, f.name)) for f in dataclasses.fields(self)}

    def structuring_element(self):
        return imaging.StructuringElement(self.se_shape, self.se_radius)

    def wrinkle_config(self):
        return wrinkle.WrinkleConfig(
            fusion_weight=self.fusion_weight,
            threshold=self.wrinkle_threshold,
            frangi_scales=tuple(self.frangi_scales),
            frangi_beta=self.frangi_beta,
            frangi_c=self.frangi_c,
            gabor_orientations=tuple(self.gabor_orientations),
            gabor_wavelength=self.gabor_wavelength,
            gabor_sigma=self.gabor_sigma,
            se_radius=self.se_radius,
            zone_split=self.zone_split,
            length_smoothing=self.length_smoothing,
            thresholds=wrinkle.CompensationThresholds(*self.compensation_thresholds),
            compensation=self.compensation,
        )

    def standard(self):
        return size_eval.StandardIncrements(*self.standard_increments)

    def schema(self):
        if self.label_schema is None:
            return measure.DEFAULT_SCHEMA
        return measure.LabelSchema.load(self.label_schema)

    def report_path(self):
        return self.report or os.path.join(self.out, "report.json")


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


_CHOICES = {
    "se_shape": ("square", "cross", "disk"),
    "refine": ("classical", "external", "none"),
    "compensation": ("inflate", "literal"),
    "score_metric": METRICS,
}

# (low, high, low inclusive) per numeric field; None leaves a side open
_RANGES = {
    "jobs": (1, None, True),
    "se_radius": (1, None, True),
    "band": (1, None, True),
    "stretch": (0, None, False),
    "timeout": (0, None, False),
    "retries": (1, None, True),
    "backoff": (0, None, True),
    "bg_tolerance": (0, None, True),
    "shoulder_fraction": (0, 0.5, False),
    "waist_fraction": (0, 0.5, False),
    "fusion_weight": (0, 1, True),
    "wrinkle_threshold": (0, 1, False),
    "frangi_beta": (0, None, False),
    "frangi_c": (0, None, False),
    "gabor_wavelength": (0, None, False),
    "gabor_sigma": (0, None, False),
    "zone_split": (0, 1, False),
    "length_smoothing": (0, None, True),
    "cm_per_pixel": (0, None, False),
}


def _field_types():
    return {f.name: f.default for f in dataclasses.fields(RunConfig)}


def _coerce(name, value):
    """Convert ``value`` (JSON value or environment string) to the type of
    the field's default."""
    default = _field_types()[name]
    if value is None:
        return None
    try:
        if name in ("standard_increments",) and isinstance(value, dict):
            return tuple(float(value[d]) for d in measure.DIMENSIONS)
        if name == "compensation_thresholds" and isinstance(value, dict):
            return tuple(float(value[k]) for k in ("a", "b", "c", "d"))
        if isinstance(default, tuple):
            items = value.split(",") if isinstance(value, str) else list(value)
            cast = int if name == "sizes" else float
            return tuple(cast(x) for x in items if str(x).strip() != "")
        if isinstance(default, bool):
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return low in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float) or name == "cm_per_pixel":
            return float(value)
        return str(value)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"config field {name!r}: cannot interpret {value!r}") from exc


def validate_config(cfg, need_manifest=True):
    """Range and existence checks; raises :class:`ConfigurationError`."""
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigurationError(f"{name} must be one of {allowed}, got {getattr(cfg, name)!r}")
    for name, (lo, hi, lo_inclusive) in _RANGES.items():
        v = getattr(cfg, name)
        if v is None:
            continue
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigurationError(f"{name} must be finite, got {v}")
        if lo is not None and (v < lo or (v == lo and not lo_inclusive)):
            raise ConfigurationError(f"{name} out of range: {v}")
        if hi is not None and v > hi:
            raise ConfigurationError(f"{name} out of range: {v}")
    if not cfg.sizes or any(s not in (1, 2, 3) for s in cfg.sizes):
        raise ConfigurationError(f"sizes must be a non-empty subset of 1,2,3, got {cfg.sizes}")
    if cfg.weight_level not in (1, 2, 3):
        raise ConfigurationError(f"weight_level must be 1, 2 or 3, got {cfg.weight_level}")
    if not cfg.frangi_scales or any(s <= 0 for s in cfg.frangi_scales):
        raise ConfigurationError("frangi_scales must be positive")
    if not cfg.gabor_orientations:
        raise ConfigurationError("gabor_orientations must not be empty")
    if len(cfg.standard_increments) != 4:
        raise ConfigurationError("standard_increments needs four values (cl, sl, sw, ww)")
    if len(cfg.compensation_thresholds) != 4:
        raise ConfigurationError("compensation_thresholds needs four values (a, b, c, d)")
    try:
        cfg.standard()
        wrinkle.CompensationThresholds(*cfg.compensation_thresholds)
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc)) from exc
    if cfg.refine == "external" and not cfg.refine_url:
        raise ConfigurationError("refine='external' needs refine_url")
    if need_manifest:
        if not cfg.manifest:
            raise ConfigurationError("no manifest given")
        if not os.path.isfile(cfg.manifest):
            raise ConfigurationError(f"manifest {cfg.manifest} does not exist")
    if cfg.label_schema and not os.path.isfile(cfg.label_schema):
        raise ConfigurationError(f"label schema {cfg.label_schema} does not exist")
    return cfg


def load_config(path=None, env=None, overrides=None):
    """Merge defaults, a JSON config file, environment and explicit overrides.

    Parameters
    ----------
    path : str, optional
        JSON object whose keys are :class:`RunConfig` field names.
    env : mapping, optional
        Environment to scan for ``VTONSIZE_<FIELD>`` variables; defaults
        to ``os.environ``.
    overrides : dict, optional
        Highest-priority values; ``None`` entries are ignored.
    """
    known = _field_types()
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = f.read()
            doc = json.loads(raw.decode("utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"config {path} must hold a JSON object")
        unknown = sorted(set(doc) - set(known))
        if unknown:
            raise ConfigurationError(f"config {path}: unknown fields {unknown}")
        values.update({k: _coerce(k, v) for k, v in doc.items()})
    env = os.environ if env is None else env
    for name in known:
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = _coerce(name, env[key])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in known:
            raise ConfigurationError(f"unknown config field {k!r}")
        values[k] = _coerce(k, v)
    return RunConfig(**values)


# --------------------------------------------------------------------------
# manifests

_PATH_FIELDS = ("person", "mask", "keypoints", "label_map", "garment")
_LEVEL_FIELDS = ("generated", "refined_masks", "adjusted_garments")


def load_manifest(path):
    """Read a JSONL manifest; paths come back absolute.

    Blank lines and ``#`` comment lines are skipped. Records need a unique
    string ``id``.
    """
    base = os.path.dirname(os.path.abspath(path))
    records, seen = [], set()
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            rec = json.loads(s)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict) or not isinstance(rec.get("id"), str) or not rec["id"]:
            raise ConfigurationError(f"{path}:{lineno}: record needs a non-empty string 'id'")
        if rec["id"] in seen:
            raise ConfigurationError(f"{path}:{lineno}: duplicate record id {rec['id']!r}")
        seen.add(rec["id"])
        for k in _PATH_FIELDS:
            if isinstance(rec.get(k), str):
                rec[k] = os.path.normpath(os.path.join(base, rec[k]))
        for k in _LEVEL_FIELDS:
            if isinstance(rec.get(k), dict):
                rec[k] = {str(lvl): os.path.normpath(os.path.join(base, p)) for lvl, p in rec[k].items() if p}
        records.append(rec)
    return sorted(records, key=lambda r: r["id"])


def write_manifest(path, records):
    """Atomically write ``records`` as JSONL with paths relative to ``path``."""
    base = os.path.dirname(os.path.abspath(path))

    def rel(p):
        return os.path.relpath(p, base).replace(os.sep, "/")

    lines = []
    for rec in sorted(records, key=lambda r: r["id"]):
        out = dict(rec)
        for k in _PATH_FIELDS:
            if isinstance(out.get(k), str):
                out[k] = rel(out[k])
        for k in _LEVEL_FIELDS:
            if isinstance(out.get(k), dict):
                out[k] = {lvl: rel(p) for lvl, p in sorted(out[k].items())}
        lines.append(json.dumps(out, sort_keys=True, allow_nan=False))
    io.atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")


def _need(rec, key):
    p = rec.get(key)
    if not p:
        raise InvalidInputError(f"record {rec['id']}: no {key!r} entry")
    if not os.path.isfile(p):
        raise InvalidInputError(f"record {rec['id']}: {key} file {p} does not exist")
    return p


def record_scale(rec, cfg):
    """Pixel scale for a record: the config override wins over the record."""
    if cfg.cm_per_pixel is not None:
        return measure.PixelScale(float(cfg.cm_per_pixel), "config")
    s = rec.get("scale")
    if isinstance(s, (int, float)) and not isinstance(s, bool):
        return measure.PixelScale(float(s), "manifest")
    if isinstance(s, dict):
        if "cm_per_pixel" in s:
            return measure.PixelScale(float(s["cm_per_pixel"]), "manifest")
        if "person_height_cm" in s and "person_height_px" in s:
            return measure.PixelScale.from_person_height(s["person_height_cm"], s["person_height_px"])
    raise InvalidInputError(f"record {rec['id']}: no usable scale information")


# --------------------------------------------------------------------------
# per-record execution


@dataclass
class RecordResult:
    id: str
    ok: bool
    record: dict = None
    data: dict = field(default_factory=dict)
    error: str = None


def _run_records(records, fn, jobs):
    """Apply ``fn`` to every record, catching per-record failures.

    Results are returned in sorted record-id order whatever ``jobs`` is.
    """

    def safe(rec):
        try:
            return fn(rec)
        except (VtonSizeError, OSError, ValueError) as exc:
            log.error("record %s failed: %s", rec["id"], exc)
            return RecordResult(rec["id"], False, rec, error=f"{type(exc).__name__}: {exc}")

    ordered = sorted(records, key=lambda r: r["id"])
    if jobs <= 1 or len(ordered) <= 1:
        results = [safe(r) for r in ordered]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(safe, ordered))
    return sorted(results, key=lambda r: r.id)


@dataclass(frozen=True)
class CommandOutcome:
    results: list
    outputs: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [r for r in self.results if not r.ok]

    def exit_code(self, strict):
        """0 on success; 1 when records failed under ``strict`` or when
        every record failed."""
        if not self.failed:
            return 0
        if strict or len(self.failed) == len(self.results):
            return 1
        return 0


def _sha256(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _finish_manifest(cfg, results):
    path = os.path.join(cfg.out, "manifest.jsonl")
    write_manifest(path, [r.record for r in results])
    return path


# --------------------------------------------------------------------------
# gen-masks


def _refiner(cfg):
    if cfg.refine == "none":
        return lambda m: m
    if cfg.refine == "classical":
        return lambda m: refining.refine_mask_classical(m, cfg.band)
    backend = refining.HttpRefinementBackend(cfg.refine_url, timeout=cfg.timeout)
    return lambda m: refining.refine_mask_external(m, backend, fallback=cfg.refine_fallback, band=cfg.band)


def cmd_gen_masks(cfg):
    """Write ``M_1..M_3`` per record plus a JSON provenance sidecar per mask.

    Level 1 is the tight mask itself and is not refined, so it stays
    identical to ``M_O``. Levels 2 and 3 are coarse masks passed through
    the configured refiner. Outputs land in ``<out>/masks/<id>/``.
    """
    validate_config(cfg)
    records = load_manifest(cfg.manifest)
    se = cfg.structuring_element()
    refiner = _refiner(cfg)

    def one(rec):
        mask_path = _need(rec, "mask")
        kp_path = _need(rec, "keypoints")
        mo = io.read_mask(mask_path)
        kp = pose.load_keypoints(kp_path)
        out_dir = os.path.join(cfg.out, "masks", rec["id"])
        written = {}
        for lvl in sorted(cfg.sizes):
            coarse = pose.coarse_mask(mo, kp, lvl, se)
            m = coarse if lvl == 1 else refiner(coarse)
            path = os.path.join(out_dir, f"M{lvl}.png")
            io.write_mask(path, m)
            io.atomic_write_json(os.path.join(out_dir, f"M{lvl}.json"), {
                "record": rec["id"],
                "level": lvl,
                "source_mask": os.path.basename(mask_path),
                "source_mask_sha256": _sha256(mask_path),
                "keypoints_sha256": _sha256(kp_path),
                "structuring_element": {"shape": se.shape, "radius": se.radius},
                "refine": "none" if lvl == 1 else cfg.refine,
                "band": cfg.band,
                "tool_version": __version__,
                "pixels": int(m.sum()),
            })
            written[str(lvl)] = os.path.abspath(path)
        new = dict(rec)
        new["refined_masks"] = {**rec.get("refined_masks", {}), **written}
        return RecordResult(rec["id"], True, new, {"masks": written})

    results = _run_records(records, one, cfg.jobs)
    return CommandOutcome(results, {"manifest": _finish_manifest(cfg, results)})


# --------------------------------------------------------------------------
# adjust-garment


def cmd_adjust_garment(cfg):
    """Write the size-adjusted garment images ``C_1..C_3`` per record."""
    validate_config(cfg)
    records = load_manifest(cfg.manifest)

    def one(rec):
        img = io.read_rgb(_need(rec, "garment"))
        out_dir = os.path.join(cfg.out, "garments", rec["id"])
        written = {}
        for lvl in sorted(cfg.sizes):
            path = os.path.join(out_dir, f"C{lvl}.png")
            io.write_rgb(path, pose.adjust_garment(img, lvl, cfg.stretch))
            written[str(lvl)] = os.path.abspath(path)
        new = dict(rec)
        new["adjusted_garments"] = {**rec.get("adjusted_garments", {}), **written}
        return RecordResult(rec["id"], True, new, {"garments": written})

    results = _run_records(records, one, cfg.jobs)
    return CommandOutcome(results, {"manifest": _finish_manifest(cfg, results)})


# --------------------------------------------------------------------------
# tryon


class TryOnClient:
    """Multipart client for an external try-on service.

    The service receives ``person``, ``mask`` and ``garment`` PNG parts and
    a ``size_level`` form field, and answers with the generated PNG.
    Transport errors, timeouts and non-200 answers are retried with
    exponential backoff.
    """

    def __init__(self, url, timeout=60.0, attempts=3, backoff=0.5, session=None, sleep=time.sleep):
        self.url = url
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.session = session or requests.Session()
        self.sleep = sleep

    def generate(self, person_png, mask_png, garment_png, level):
        """Return ``(image, info)`` where ``info`` holds latency, attempts
        and the backend identity."""
        last = None
        for attempt in range(1, self.attempts + 1):
            t0 = time.perf_counter()
            try:
                resp = self.session.post(
                    self.url,
                    files={
                        "person": ("person.png", person_png, "image/png"),
                        "mask": ("mask.png", mask_png, "image/png"),
                        "garment": ("garment.png", garment_png, "image/png"),
                    },
                    data={"size_level": str(level)},
                    timeout=self.timeout,
                )
                if resp.status_code != 200:
                    raise BackendError(f"try-on backend {self.url} answered HTTP {resp.status_code}")
                try:
                    img = io.png_bytes_to_rgb(resp.content)
                except Exception as exc:
                    raise BackendError(f"try-on backend {self.url} sent an undecodable image: {exc}") from exc
                identity = resp.headers.get("X-Backend") or resp.headers.get("Server") or self.url
                return img, {"latency_s": time.perf_counter() - t0, "attempts": attempt, "backend": identity}
            except requests.RequestException as exc:
                last = BackendError(f"try-on backend {self.url} unreachable: {exc}")
            except BackendError as exc:
                last = exc
            if attempt < self.attempts:
                delay = self.backoff * 2 ** (attempt - 1)
                log.warning("try-on attempt %d/%d failed (%s); retrying in %.2fs", attempt, self.attempts, last, delay)
                self.sleep(delay)
        raise last


def cmd_tryon(cfg, client=None):
    """Generate ``Y_i`` for every record and size level through the backend.

    Uploads the person image, the level's refined mask and the level's
    adjusted garment (computed on the fly when ``adjust-garment`` has not
    run). Latency and backend identity go to ``<out>/generated/<id>/tryon.json``.
    """
    validate_config(cfg)
    if client is None:
        if not cfg.backend_url:
            raise ConfigurationError("tryon needs backend_url (--backend-url or VTONSIZE_BACKEND_URL)")
        client = TryOnClient(cfg.backend_url, cfg.timeout, cfg.retries, cfg.backoff)
    records = load_manifest(cfg.manifest)

    def one(rec):
        with open(_need(rec, "person"), "rb") as f:
            person_png = f.read()
        masks = rec.get("refined_masks") or {}
        garments = rec.get("adjusted_garments") or {}
        out_dir = os.path.join(cfg.out, "generated", rec["id"])
        written, calls = {}, {}
        for lvl in sorted(cfg.sizes):
            key = str(lvl)
            if key not in masks or not os.path.isfile(masks[key]):
                raise InvalidInputError(f"record {rec['id']}: no refined mask for level {lvl}; run gen-masks first")
            with open(masks[key], "rb") as f:
                mask_png = f.read()
            if key in garments and os.path.isfile(garments[key]):
                with open(garments[key], "rb") as f:
                    garment_png = f.read()
            else:
                g = pose.adjust_garment(io.read_rgb(_need(rec, "garment")), lvl, cfg.stretch)
                garment_png = io.rgb_to_png_bytes(g)
            img, info = client.generate(person_png, mask_png, garment_png, lvl)
            path = os.path.join(out_dir, f"Y{lvl}.png")
            io.write_rgb(path, img)
            written[key] = os.path.abspath(path)
            calls[key] = info
        io.atomic_write_json(os.path.join(out_dir, "tryon.json"), {"record": rec["id"], "calls": calls})
        new = dict(rec)
        new["generated"] = {**rec.get("generated", {}), **written}
        return RecordResult(rec["id"], True, new, {"generated": written, "calls": calls})

    results = _run_records(records, one, cfg.jobs)
    return CommandOutcome(results, {"manifest": _finish_manifest(cfg, results)})


# --------------------------------------------------------------------------
# evaluate


def _r(v, nd=9):
    return None if v is None else round(float(v), nd)


def measure_level(rgb, refined, labels, scale, cfg, schema=None):
    """Measure one generated image; returns a dict of raw, wrinkle and cm blocks."""
    schema = schema or cfg.schema()
    ic = measure.extract_garment(rgb, refined, cfg.bg_tolerance)
    regions = measure.split_regions(ic, labels, schema)
    raw = measure.measure(regions, cfg.shoulder_fraction, cfg.waist_fraction)
    wcfg = cfg.wrinkle_config()
    if cfg.wrinkles:
        report = wrinkle.analyze_wrinkles(imaging.rgb_to_gray(rgb), regions, wcfg)
    else:
        report = wrinkle.WrinkleReport({d: 0.0 for d in measure.DIMENSIONS}).with_ratios(wcfg.thresholds)
    comp = wrinkle.compensate(raw, report, wcfg)
    return {"raw_px": raw, "wrinkles": report, "compensated_px": comp, "compensated_cm": measure.to_cm(comp, scale)}


def _measurement_dict(m):
    d = m.as_dict()
    return {k: (_r(v) if isinstance(v, float) else v) for k, v in d.items()}


def evaluate_record(rec, cfg, schema=None):
    """Measure every available size level of one record.

    Returns a :class:`RecordResult` whose ``data`` holds the JSON-ready
    record block and the :class:`~vtonsize.size_eval.SizeTriplet`.
    Levels without a generated image or refined mask are listed under
    ``missing_levels``.
    """
    labels = io.read_label_map(_need(rec, "label_map"))
    scale = record_scale(rec, cfg)
    levels, triplet, missing = {}, {}, []
    gen = rec.get("generated") or {}
    masks = rec.get("refined_masks") or {}
    for lvl in (1, 2, 3):
        key = str(lvl)
        if key not in gen or key not in masks:
            missing.append(lvl)
            triplet[lvl] = None
            continue
        for p in (gen[key], masks[key]):
            if not os.path.isfile(p):
                raise InvalidInputError(f"record {rec['id']}: level {lvl} file {p} does not exist")
        rgb = io.read_rgb(gen[key])
        refined = io.read_mask(masks[key])
        if rgb.shape[:2] != labels.shape or refined.shape != labels.shape:
            raise InvalidInputError(f"record {rec['id']}: level {lvl} image, mask and label map differ in size")
        out = measure_level(rgb, refined, labels, scale, cfg, schema)
        triplet[lvl] = out["compensated_cm"]
        levels[key] = {
            "raw_px": _measurement_dict(out["raw_px"]),
            "wrinkles": _round_wrinkles(out["wrinkles"].as_dict()),
            "compensated_cm": _measurement_dict(out["compensated_cm"]),
        }
    t = size_eval.SizeTriplet(triplet)
    inc = size_eval.increments(t)
    block = {
        "id": rec["id"],
        "scale": {"cm_per_pixel": _r(scale.cm_per_pixel, 12), "source": scale.source},
        "levels": levels,
        "missing_levels": missing,
        "increments_cm": {k: {d: _r(v) for d, v in row.items()} for k, row in inc.items()},
    }
    return RecordResult(rec["id"], True, rec, {"block": block, "triplet": t})


def _round_wrinkles(d):
    d["lengths"] = {k: _r(v, 6) for k, v in d["lengths"].items()}
    d["ratios"] = {k: _r(v, 12) for k, v in d["ratios"].items()}
    return d


def _round_tree(obj, nd=9):
    if isinstance(obj, float):
        return _r(obj, nd)
    if isinstance(obj, dict):
        return {k: _round_tree(v, nd) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v, nd) for v in obj]
    return obj


def build_report(cfg, results):
    """Assemble the run report from per-record results (sorted by id)."""
    ok = [r for r in results if r.ok]
    aggregate = None
    if ok:
        ir = size_eval.evaluate_batch(
            [(r.id, r.data["triplet"]) for r in ok],
            cfg.standard(),
            weight_level=cfg.weight_level,
            score_metric=cfg.score_metric,
        )
        aggregate = _round_tree(ir.as_dict())
    notes = []
    for r in ok:
        if r.data["block"]["missing_levels"]:
            notes.append(f"record {r.id}: missing size levels {r.data['block']['missing_levels']} excluded from pairs using them")
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "vtonsize", "version": __version__},
        "config": cfg.as_dict(),
        "records": [r.data["block"] for r in ok],
        "failures": [{"id": r.id, "error": r.error} for r in results if not r.ok],
        "notes": notes,
        "aggregate": aggregate,
        "complete": True,
    }


def table_rows(report):
    """Flat rows ``(pair, dimension, n, mae, rmse, mape, smape)`` of a report;
    empty when the report has no aggregate."""
    agg = report.get("aggregate")
    if not agg:
        return []
    rows = []
    for pair in sorted(agg["pairs"]):
        for d in measure.DIMENSIONS:
            m = agg["pairs"][pair].get(d)
            if m is None:
                rows.append({"pair": pair, "dimension": d, "n": 0, **{k: None for k in METRICS}})
            else:
                rows.append({"pair": pair, "dimension": d, "n": m["n"], **{k: m[k] for k in METRICS}})
    return rows


def rows_to_csv(rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        w.writerow(["" if row[k] is None else (repr(float(row[k])) if k in METRICS else row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def read_table_csv(path):
    """Parse a table CSV written by :func:`rows_to_csv` back into rows."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ReportParseError(f"{path}: unexpected CSV header {reader.fieldnames}", 0)
        rows = []
        for row in reader:
            rows.append({
                "pair": row["pair"],
                "dimension": row["dimension"],
                "n": int(row["n"]),
                **{k: (float(row[k]) if row[k] != "" else None) for k in METRICS},
            })
    return rows


def cmd_evaluate(cfg):
    """Measure all records, aggregate increment errors and write the report.

    Writes ``report.json`` (atomically, ``complete`` set only on the final
    document) and ``report.csv`` with one row per pair and dimension.
    """
    validate_config(cfg)
    records = load_manifest(cfg.manifest)
    schema = cfg.schema()
    results = _run_records(records, lambda rec: evaluate_record(rec, cfg, schema), cfg.jobs)
    report = build_report(cfg, results)
    path = cfg.report_path()
    io.atomic_write_json(path, report)
    csv_path = os.path.splitext(path)[0] + ".csv"
    io.atomic_write_bytes(csv_path, rows_to_csv(table_rows(report)).encode("utf-8"))
    return CommandOutcome(results, {"report": path, "csv": csv_path, "document": report})


# --------------------------------------------------------------------------
# report


def _byte_offset(text, char_pos):
    return len(text[:char_pos].encode("utf-8"))


def read_report(path):
    """Load a run report; an empty file reads as an empty report.

    Raises :class:`ReportParseError` with the byte offset of the first
    undecodable byte or malformed token.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.strip():
        return {}
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ReportParseError(f"{path}: not UTF-8", exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportParseError(f"{path}: {exc.msg}", _byte_offset(text, exc.pos)) from exc
    if not isinstance(doc, dict):
        raise ReportParseError(f"{path}: top level must be an object", 0)
    if doc and doc.get("schema_version") != SCHEMA_VERSION:
        raise ReportParseError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}", 0)
    if doc and not doc.get("complete", False):
        raise ReportParseError(f"{path}: report is not marked complete", 0)
    return doc


def _fmt(v, pct=False):
    if v is None:
        return "-"
    return f"{v:.2f}%" if pct else f"{v:.4f}"


def format_table(report):
    """Text table: one row per dimension and pair, MAE/RMSE/MAPE/SMAPE columns."""
    rows = table_rows(report)
    header = f"{'dim':<4} {'pair':<6} {'n':>4} {'MAE':>9} {'RMSE':>9} {'MAPE':>9} {'SMAPE':>9}"
    lines = [header, "-" * len(header)]
    order = {d: i for i, d in enumerate(measure.DIMENSIONS)}
    for row in sorted(rows, key=lambda r: (order[r["dimension"]], r["pair"])):
        lines.append(
            f"{row['dimension'].upper():<4} {row['pair']:<6} {row['n']:>4} "
            f"{_fmt(row['mae']):>9} {_fmt(row['rmse']):>9} "
            f"{_fmt(row['mape'], True):>9} {_fmt(row['smape'], True):>9}"
        )
    agg = report.get("aggregate") or {}
    for pair, s in sorted((agg.get("scores") or {}).items()):
        lines.append(f"{pair}: X_t={_fmt(s.get('x_t'))} E_t={_fmt(s.get('e_t'))}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg):
    """Print the error table of an existing report and write its CSV.

    Returns ``(text, rows, csv_path)``. An empty report yields an empty
    table and a logged warning.
    """
    validate_config(cfg, need_manifest=False)
    path = cfg.report_path()
    if not os.path.isfile(path):
        raise ConfigurationError(f"report {path} does not exist")
    doc = read_report(path)
    rows = table_rows(doc)
    if not rows:
        log.warning("report %s holds no aggregate; the table is empty", path)
    csv_path = os.path.join(cfg.out, "table.csv")
    io.atomic_write_bytes(csv_path, rows_to_csv(rows).encode("utf-8"))
    return format_table(doc), rows, csv_path
