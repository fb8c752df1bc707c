"""Size increments between adjacent size levels and their error against
standard sizing increments."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidInputError
from .measure import DIMENSIONS

PAIRS = ((1, 2), (2, 3))


def pair_key(i, j):
    return f"A{i}-A{j}"


@dataclass(frozen=True)
class StandardIncrements:
    """Standard size step per dimension, in centimetres."""

    cl: float = 3.0
    sl: float = 1.0
    sw: float = 2.0
    ww: float = 3.0

    def __post_init__(self):
        for d in DIMENSIONS:
            v = getattr(self, d)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"standard increment for {d} must be positive, got {v}")

    def get(self, dim):
        return getattr(self, dim)

    def as_dict(self):
        return {d: float(getattr(self, d)) for d in DIMENSIONS}


STANDARD = StandardIncrements()


@dataclass(frozen=True)
class SizeTriplet:
    """Compensated centimetre measurements per size level (missing levels are ``None``)."""

    levels: dict

    def value(self, level, dim):
        m = self.levels.get(level)
        if m is None or not m.valid.get(dim, False):
            return None
        return float(m.get(dim))


def increments(t):
    """Absolute differences per adjacent pair; ``None`` where a level is
    missing or the dimension is invalid at either level."""
    out = {}
    for i, j in PAIRS:
        row = {}
        for d in DIMENSIONS:
            a, b = t.value(i, d), t.value(j, d)
            row[d] = None if a is None or b is None else abs(a - b)
        out[pair_key(i, j)] = row
    return out


@dataclass(frozen=True)
class ErrorMetrics:
    n: int
    mae: float
    rmse: float
    mape: float
    smape: float

    def as_dict(self):
        return {"n": self.n, "mae": self.mae, "rmse": self.rmse, "mape": self.mape, "smape": self.smape}


def error_metrics(observed, standard):
    """MAE, RMSE (same unit as the increments), MAPE and SMAPE (percent).

    The reference for every observation is the scalar ``standard``. SMAPE
    uses the half-sum denominator and counts 0/0 as zero error.
    """
    o = np.asarray(list(observed), dtype=np.float64)
    if o.size == 0:
        raise InvalidInputError("error metrics need at least one observation")
    if not (math.isfinite(standard) and standard > 0):
        raise InvalidInputError(f"standard increment must be positive, got {standard}")
    err = np.abs(o - standard)
    denom = (np.abs(o) + abs(standard)) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        sym = np.where(denom > 0, err / denom, 0.0)
    return ErrorMetrics(
        n=int(o.size),
        mae=float(err.mean()),
        rmse=float(np.sqrt(np.mean(err * err))),
        mape=float(100.0 * np.mean(err / standard)),
        smape=float(100.0 * sym.mean()),
    )


def dimension_weights(reference):
    """Weights ``dim / (CL + SL + SW + WW)`` over the valid dimensions.

    ``reference`` maps dimension to a measurement or ``None`` when invalid.
    """
    valid = {d: float(v) for d, v in reference.items() if v is not None}
    total = sum(valid.values())
    if not valid:
        raise InvalidInputError("no valid dimension to weight")
    if not total > 0:
        raise InvalidInputError("reference measurements sum to zero; weights undefined")
    return {d: valid[d] / total for d in valid}


def weighted_score(scores, reference):
    """Size-sensitivity weighted sum of per-dimension values.

    Parameters
    ----------
    scores : dict
        Dimension -> error or score; ``None`` marks an invalid dimension.
    reference : dict
        Dimension -> reference-size measurement used for the weights;
        ``None`` marks an invalid dimension.

    Invalid dimensions on either side are dropped and the remaining
    weights renormalized.
    """
    usable = {d: reference.get(d) for d in DIMENSIONS if scores.get(d) is not None and reference.get(d) is not None}
    if not usable:
        raise InvalidInputError("all dimensions are invalid")
    w = dimension_weights(usable)
    return sum(w[d] * float(scores[d]) for d in DIMENSIONS if d in w)


def normalized_score(error, cap):
    """``max(0, 1 - error / cap)``; 1 is perfect, 0 at or beyond ``cap``."""
    if not cap > 0:
        raise InvalidInputError(f"score cap must be positive, got {cap}")
    return max(0.0, 1.0 - error / cap)


def evaluate_batch(triplets, standard=STANDARD, weight_level=1, score_metric="mae", caps=None):
    """Aggregate increments of many records into per-pair error tables.

    Parameters
    ----------
    triplets : list of (record_id, SizeTriplet)
        Processed in sorted ``record_id`` order for reproducible sums.
    standard : StandardIncrements
    weight_level : int
        Size level whose measurements set the dimension weights.
    score_metric : {'mae', 'rmse', 'mape', 'smape'}
        Per-dimension error fed to the weighted aggregate.
    caps : dict, optional
        Per-dimension caps for the normalized score; default is the
        standard increment (in the metric's unit for MAE/RMSE, 100 % for
        MAPE/SMAPE).
    """
    if score_metric not in ("mae", "rmse", "mape", "smape"):
        raise InvalidInputError(f"unknown score metric {score_metric!r}")
    ordered = sorted(triplets, key=lambda rt: rt[0])
    per_record = {rid: increments(t) for rid, t in ordered}

    pairs = {}
    for i, j in PAIRS:
        key = pair_key(i, j)
        row = {}
        for d in DIMENSIONS:
            obs = [per_record[rid][key][d] for rid, _ in ordered if per_record[rid][key][d] is not None]
            row[d] = error_metrics(obs, standard.get(d)) if obs else None
        pairs[key] = row

    ref = {}
    for d in DIMENSIONS:
        vals = [t.value(weight_level, d) for _, t in ordered]
        vals = [v for v in vals if v is not None]
        ref[d] = float(np.mean(vals)) if vals else None

    if caps is None:
        caps = {d: (standard.get(d) if score_metric in ("mae", "rmse") else 100.0) for d in DIMENSIONS}

    scores = {}
    for key, row in pairs.items():
        errors = {d: (getattr(row[d], score_metric) if row[d] is not None else None) for d in DIMENSIONS}
        normed = {d: (normalized_score(e, caps[d]) if e is not None else None) for d, e in errors.items()}
        try:
            x_t = weighted_score(errors, ref)
            e_t = weighted_score(normed, ref)
        except InvalidInputError:
            x_t = e_t = None
        scores[key] = {"errors": errors, "scores": normed, "x_t": x_t, "e_t": e_t}

    try:
        weights = dimension_weights({d: v for d, v in ref.items() if v is not None})
    except InvalidInputError:
        weights = {}
    return IncrementReport(
        per_record=per_record,
        pairs=pairs,
        reference=ref,
        weights=weights,
        scores=scores,
        standard=standard,
        score_metric=score_metric,
        weight_level=weight_level,
    )


@dataclass(frozen=True)
class IncrementReport:
    per_record: dict
    pairs: dict
    reference: dict
    weights: dict
    scores: dict
    standard: StandardIncrements
    score_metric: str
    weight_level: int

    def as_dict(self):
        return {
            "standard_increments_cm": self.standard.as_dict(),
            "score_metric": self.score_metric,
            "weight_level": self.weight_level,
            "reference_cm": self.reference,
            "weights": self.weights,
            "pairs": {
                key: {d: (m.as_dict() if m is not None else None) for d, m in row.items()}
                for key, row in self.pairs.items()
            },
            "scores": self.scores,
        }
