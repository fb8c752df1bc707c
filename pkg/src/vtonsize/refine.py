"""Mask edge refinement.

Holds the edge-band construction, the Edge Attention block (four parallel
branches of 1x1 projection, residual block and gated convolution) with its
hand-written backward pass, a classical smoothing refiner used in place of
a saliency network, and an HTTP client for an external refinement service.

Feature maps are ``(C, H, W)`` float64 arrays.
"""

from dataclasses import dataclass
import json
import logging
import os
import warnings

import numpy as np
from scipy import ndimage
import requests

from . import imaging
from .errors import BackendError, InvalidInputError, ProtocolError
from .io import atomic_write_bytes, mask_to_png_bytes, png_bytes_to_mask

log = logging.getLogger(__name__)

DEFAULT_BAND = 7
N_BRANCHES = 4


class BackendFallbackWarning(UserWarning):
    """The external refiner failed and the classical result was used."""


def edge_mask(mask, band=DEFAULT_BAND):
    """Morphological gradient band of half-width ``band`` around the boundary."""
    if int(band) != band or band < 1:
        raise InvalidInputError(f"band must be an integer >= 1, got {band}")
    m = imaging.as_mask(mask)
    se = imaging.disk(int(band))
    return imaging.dilate(m, se) & ~imaging.erode(m, se)


def sigmoid(x):
    # split by sign to stay finite for large |x|
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _feature(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise InvalidInputError(f"{name} must be a (C, H, W) feature map, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class GatedConvParams:
    """1x1 gate convolution ``weight`` (C_out, C_in) + ``bias`` (C_out,),
    and the per-pixel channel mixing matrix ``mix`` (C_out, C_out)."""

    weight: np.ndarray
    bias: np.ndarray
    mix: np.ndarray

    def arrays(self):
        return {"weight": self.weight, "bias": self.bias, "mix": self.mix}


@dataclass(frozen=True)
class ResidualBlockParams:
    w1: np.ndarray  # (C, C, 3, 3)
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


@dataclass(frozen=True)
class BranchParams:
    proj_weight: np.ndarray  # (C, C_edge)
    proj_bias: np.ndarray
    res: ResidualBlockParams
    gate: GatedConvParams

    def arrays(self):
        out = {"proj_weight": self.proj_weight, "proj_bias": self.proj_bias}
        out.update({f"res.{k}": v for k, v in self.res.arrays().items()})
        out.update({f"gate.{k}": v for k, v in self.gate.arrays().items()})
        return out


@dataclass(frozen=True)
class EdgeAttentionParams:
    branches: tuple

    def arrays(self):
        """Flat ``name -> array`` view in a fixed order."""
        out = {}
        for i, br in enumerate(self.branches):
            out.update({f"branch{i}.{k}": v for k, v in br.arrays().items()})
        return out

    @classmethod
    def from_arrays(cls, arrays):
        branches = []
        i = 0
        while f"branch{i}.proj_weight" in arrays:
            g = lambda k: np.asarray(arrays[f"branch{i}.{k}"], dtype=np.float64)  # noqa: E731
            branches.append(BranchParams(
                proj_weight=g("proj_weight"),
                proj_bias=g("proj_bias"),
                res=ResidualBlockParams(g("res.w1"), g("res.b1"), g("res.w2"), g("res.b2")),
                gate=GatedConvParams(g("gate.weight"), g("gate.bias"), g("gate.mix")),
            ))
            i += 1
        if not branches:
            raise InvalidInputError("no branch parameters found")
        return cls(tuple(branches))

    def check(self):
        widths = {br.proj_weight.shape[0] for br in self.branches}
        if len(widths) != 1:
            raise InvalidInputError(f"branch output widths differ: {sorted(widths)}")
        for i, br in enumerate(self.branches):
            c = br.proj_weight.shape[0]
            for name, arr, shape in (
                ("proj_bias", br.proj_bias, (c,)),
                ("res.w1", br.res.w1, (c, c, 3, 3)),
                ("res.b1", br.res.b1, (c,)),
                ("res.w2", br.res.w2, (c, c, 3, 3)),
                ("res.b2", br.res.b2, (c,)),
                ("gate.bias", br.gate.bias, (c,)),
                ("gate.mix", br.gate.mix, (c, c)),
            ):
                if arr.shape != shape:
                    raise InvalidInputError(f"branch{i}.{name} has shape {arr.shape}, expected {shape}")
            if br.gate.weight.shape[0] != c:
                raise InvalidInputError(f"branch{i}.gate.weight has {br.gate.weight.shape[0]} outputs, expected {c}")


def init_params(edge_channels, gate_channels, width, seed=0, scale=0.1, branches=N_BRANCHES):
    """Seeded uniform ``[-scale, scale]`` parameters."""
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-scale, scale, size=shape)  # noqa: E731
    out = []
    for _ in range(branches):
        out.append(BranchParams(
            proj_weight=u(width, edge_channels),
            proj_bias=u(width),
            res=ResidualBlockParams(u(width, width, 3, 3), u(width), u(width, width, 3, 3), u(width)),
            gate=GatedConvParams(u(width, gate_channels), u(width), u(width, width)),
        ))
    return EdgeAttentionParams(tuple(out))


def save_params(path, params):
    """Write raw little-endian float64 data to ``path`` and a JSON manifest
    (name, shape, byte offset) to ``path + '.json'``."""
    entries = []
    chunks = []
    offset = 0
    for name, arr in params.arrays().items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": "<f8"})
        chunks.append(data)
        offset += len(data)
    atomic_write_bytes(path, b"".join(chunks))
    atomic_write_bytes(os.fspath(path) + ".json", json.dumps({"tensors": entries}, indent=2).encode())


def load_params(path):
    with open(os.fspath(path) + ".json") as f:
        manifest = json.load(f)
    with open(path, "rb") as f:
        blob = f.read()
    arrays = {}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        end = e["offset"] + 8 * count
        if end > len(blob):
            raise InvalidInputError(f"tensor {e['name']} runs past the end of {path}")
        arrays[e["name"]] = np.frombuffer(blob[e["offset"]:end], dtype=e.get("dtype", "<f8")).reshape(e["shape"]).astype(np.float64)
    params = EdgeAttentionParams.from_arrays(arrays)
    params.check()
    return params


def _pointwise(weight, bias, x):
    return np.einsum("oc,chw->ohw", weight, x) + bias[:, None, None]


def conv3x3(x, w, b):
    """Zero-padded 'same' 3x3 cross-correlation."""
    _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.broadcast_to(b[:, None, None], (w.shape[0], h, wd)).copy()
    for ky in range(3):
        for kx in range(3):
            out += np.einsum("oc,chw->ohw", w[:, :, ky, kx], xp[:, ky:ky + h, kx:kx + wd])
    return out


def _conv3x3_backward(x, w, dout):
    _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for ky in range(3):
        for kx in range(3):
            win = xp[:, ky:ky + h, kx:kx + wd]
            dw[:, :, ky, kx] = np.einsum("ohw,chw->oc", dout, win)
            dxp[:, ky:ky + h, kx:kx + wd] += np.einsum("oc,ohw->chw", w[:, :, ky, kx], dout)
    return dw, dout.sum(axis=(1, 2)), dxp[:, 1:-1, 1:-1]


def gated_conv_forward(ei, fi, p):
    """Gate ``ei`` by ``sigmoid(conv1x1(fi))``, add the residual, mix channels.

    ``out[:, y, x] = (ei * g + ei)[:, y, x] @ mix`` with
    ``g = sigmoid(weight @ fi[:, y, x] + bias)``.
    """
    ei = _feature(ei, "edge features")
    fi = _feature(fi, "gate features")
    if ei.shape[1:] != fi.shape[1:]:
        raise InvalidInputError(f"spatial size mismatch: edge features {ei.shape[1:]} vs gate features {fi.shape[1:]}")
    if p.weight.shape[1] != fi.shape[0]:
        raise InvalidInputError(f"gate weight expects {p.weight.shape[1]} input channels, got {fi.shape[0]}")
    if p.weight.shape[0] != ei.shape[0]:
        raise InvalidInputError(f"gate weight produces {p.weight.shape[0]} channels, edge features have {ei.shape[0]}")
    if p.mix.shape != (ei.shape[0], ei.shape[0]):
        raise InvalidInputError(f"mix matrix must be {(ei.shape[0],) * 2}, got {p.mix.shape}")
    g = sigmoid(_pointwise(p.weight, p.bias, fi))
    return np.einsum("chw,cd->dhw", ei * g + ei, p.mix)


def _branch_forward(ei, fi, br):
    x0 = _pointwise(br.proj_weight, br.proj_bias, ei)
    a1 = conv3x3(x0, br.res.w1, br.res.b1)
    r = np.maximum(a1, 0.0)
    h = conv3x3(r, br.res.w2, br.res.b2) + x0
    g = sigmoid(_pointwise(br.gate.weight, br.gate.bias, fi))
    y = h * g + h
    out = np.einsum("chw,cd->dhw", y, br.gate.mix)
    return out, (x0, a1, r, h, g, y)


def _check_shapes(ei, fi, p):
    p.check()
    br = p.branches[0]
    if br.proj_weight.shape[1] != ei.shape[0]:
        raise InvalidInputError(f"projection expects {br.proj_weight.shape[1]} edge channels, got {ei.shape[0]}")
    if br.gate.weight.shape[1] != fi.shape[0]:
        raise InvalidInputError(f"gate expects {br.gate.weight.shape[1]} gate channels, got {fi.shape[0]}")
    if ei.shape[1:] != fi.shape[1:]:
        raise InvalidInputError(f"spatial size mismatch: edge features {ei.shape[1:]} vs gate features {fi.shape[1:]}")


def edge_attention_forward(ei, fi, p):
    """Sum of the branch outputs; each branch is projection, residual block,
    then gated convolution driven by ``fi``."""
    ei = _feature(ei, "edge features")
    fi = _feature(fi, "gate features")
    _check_shapes(ei, fi, p)
    return sum(_branch_forward(ei, fi, br)[0] for br in p.branches)


def edge_attention_backward(ei, fi, p, dout):
    """Gradients of ``sum(out * dout)``.

    Returns ``(param_grads, d_ei, d_fi)`` where ``param_grads`` maps the
    same names as :meth:`EdgeAttentionParams.arrays`.
    """
    ei = _feature(ei, "edge features")
    fi = _feature(fi, "gate features")
    _check_shapes(ei, fi, p)
    grads = {}
    d_ei = np.zeros_like(ei)
    d_fi = np.zeros_like(fi)
    for i, br in enumerate(p.branches):
        _, (x0, a1, r, h, g, y) = _branch_forward(ei, fi, br)
        pre = f"branch{i}."
        grads[pre + "gate.mix"] = np.einsum("chw,dhw->cd", y, dout)
        dy = np.einsum("cd,dhw->chw", br.gate.mix, dout)
        dh = dy * (1.0 + g)
        dz = dy * h * g * (1.0 - g)
        grads[pre + "gate.weight"] = np.einsum("ohw,chw->oc", dz, fi)
        grads[pre + "gate.bias"] = dz.sum(axis=(1, 2))
        d_fi += np.einsum("oc,ohw->chw", br.gate.weight, dz)
        dw2, db2, dr = _conv3x3_backward(r, br.res.w2, dh)
        grads[pre + "res.w2"], grads[pre + "res.b2"] = dw2, db2
        da1 = dr * (a1 > 0)
        dw1, db1, dx0 = _conv3x3_backward(x0, br.res.w1, da1)
        grads[pre + "res.w1"], grads[pre + "res.b1"] = dw1, db1
        dx0 = dx0 + dh
        grads[pre + "proj_weight"] = np.einsum("ohw,chw->oc", dx0, ei)
        grads[pre + "proj_bias"] = dx0.sum(axis=(1, 2))
        d_ei += np.einsum("oc,ohw->chw", br.proj_weight, dx0)
    ordered = {k: grads[k] for k in p.arrays()}
    return ordered, d_ei, d_fi


def refine_mask_classical(coarse, band=DEFAULT_BAND, sigma=None, close_radius=2):
    """Smooth ragged edges inside the edge band only.

    The band is closed with a disk, blurred with a Gaussian of ``sigma``
    (default ``band / 3``) and re-thresholded at 0.5. Pixels outside the
    band are copied from ``coarse`` unchanged.
    """
    m = imaging.as_mask(coarse)
    zone = edge_mask(m, band)
    if not zone.any():
        return m.copy()
    sigma = band / 3.0 if sigma is None else sigma
    closed = imaging.closing(m, imaging.disk(close_radius))
    smooth = ndimage.gaussian_filter(closed.astype(np.float64), sigma, mode="nearest") >= 0.5
    return np.where(zone, smooth, m)


class EchoBackend:
    """Refinement backend that returns its input; useful for wiring tests."""

    name = "echo"

    def refine(self, mask):
        return np.array(mask, dtype=bool, copy=True)


class HttpRefinementBackend:
    """POSTs the coarse mask as a PNG and expects a PNG mask back."""

    def __init__(self, url, timeout=30.0, session=None):
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()
        self.name = url

    def refine(self, mask):
        try:
            resp = self.session.post(
                self.url,
                data=mask_to_png_bytes(mask),
                headers={"Content-Type": "image/png"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError(f"refinement backend {self.url} unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"refinement backend {self.url} answered HTTP {resp.status_code}")
        try:
            return png_bytes_to_mask(resp.content)
        except Exception as exc:
            raise BackendError(f"refinement backend {self.url} sent an undecodable mask: {exc}") from exc


def refine_mask_external(coarse, backend, fallback=True, band=DEFAULT_BAND):
    """Refine through ``backend``; on transport failure optionally fall back
    to :func:`refine_mask_classical` and emit :class:`BackendFallbackWarning`.

    A reply of the wrong size is a contract violation and always raises
    :class:`ProtocolError`.
    """
    m = imaging.as_mask(coarse)
    try:
        out = backend.refine(m)
    except ProtocolError:
        raise
    except BackendError as exc:
        if not fallback:
            raise
        log.warning("refinement backend failed, using classical refiner: %s", exc)
        warnings.warn(f"classical fallback used: {exc}", BackendFallbackWarning, stacklevel=2)
        return refine_mask_classical(m, band)
    out = np.asarray(out)
    if out.shape != m.shape:
        raise ProtocolError(f"refinement backend returned shape {out.shape}, expected {m.shape}")
    return out.astype(bool)
