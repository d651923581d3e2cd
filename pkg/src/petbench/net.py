"""Fixed binocular gaze network with exact hand-derived gradients.

One shared per-eye encoder (three stride-2 3x3 convs, global average
pool, a linear feature layer) feeds two heads:

* Baseline: concat(left 32, right 32) = 64 -> dense 64 -> ReLU ->
  dense 4, predicting absolute gaze.
* Siamese: the same encoder applied to a query and a reference frame,
  concat(query 64, reference 64) = 128 -> dense 64 -> ReLU -> dense 4,
  predicting the gaze displacement query minus reference.

There is exactly one encoder parameter set; both branches of the
Siamese pass and both eyes read it, so any update moves all of them at
once. Everything runs in float64; the reverse pass is derived by hand
for this fixed graph (no autodiff).

Gaze outputs are degree 4-vectors ordered
[yaw_left, pitch_left, yaw_right, pitch_right].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .errors import FormatError
from .polarization import Modality

VALID_IMAGE_SIZES = (32, 64, 128, 256)
KINDS = ("baseline", "siamese")

_PARAM_FIELDS = (
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "conv3_w",
    "conv3_b",
    "feat_w",
    "feat_b",
    "base1_w",
    "base1_b",
    "base2_w",
    "base2_b",
    "siam1_w",
    "siam1_b",
    "siam2_w",
    "siam2_b",
)


def _expected_shapes(d: int) -> dict:
    return {
        "conv1_w": (8, d, 3, 3),
        "conv1_b": (8,),
        "conv2_w": (16, 8, 3, 3),
        "conv2_b": (16,),
        "conv3_w": (32, 16, 3, 3),
        "conv3_b": (32,),
        "feat_w": (32, 32),
        "feat_b": (32,),
        "base1_w": (64, 64),
        "base1_b": (64,),
        "base2_w": (4, 64),
        "base2_b": (4,),
        "siam1_w": (64, 128),
        "siam1_b": (64,),
        "siam2_w": (4, 64),
        "siam2_b": (4,),
    }


@dataclass(frozen=True)
class ParamSet:
    """All learnable parameters plus the architecture configuration."""

    D: int
    image_size: int
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    conv3_w: np.ndarray
    conv3_b: np.ndarray
    feat_w: np.ndarray
    feat_b: np.ndarray
    base1_w: np.ndarray
    base1_b: np.ndarray
    base2_w: np.ndarray
    base2_b: np.ndarray
    siam1_w: np.ndarray
    siam1_b: np.ndarray
    siam2_w: np.ndarray
    siam2_b: np.ndarray

    def __post_init__(self):
        shapes = _expected_shapes(self.D)
        for name in _PARAM_FIELDS:
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != shapes[name]:
                raise ValueError(f"{name}: expected shape {shapes[name]}, got {a.shape}")
            object.__setattr__(self, name, a)

    def arrays(self) -> tuple:
        """Parameter planes in the declared (serialization) order."""
        return tuple(getattr(self, name) for name in _PARAM_FIELDS)

    def with_arrays(self, arrays) -> "ParamSet":
        return replace(self, **dict(zip(_PARAM_FIELDS, arrays)))

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(seed: int, D: int, image_size: int) -> ParamSet:
    """He-uniform fan-in weights, zero biases; deterministic in seed."""
    if D not in (1, 3):
        raise ValueError(f"channel count D must be 1 or 3, got {D}")
    if image_size not in VALID_IMAGE_SIZES:
        raise ValueError(f"image_size must be one of {VALID_IMAGE_SIZES}, got {image_size}")
    rng = np.random.default_rng(seed)
    arrays = []
    for name in _PARAM_FIELDS:
        shape = _expected_shapes(D)[name]
        if name.endswith("_b"):
            arrays.append(np.zeros(shape))
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / fan_in)
            arrays.append(rng.uniform(-limit, limit, size=shape))
    return ParamSet(D, image_size, *arrays)


def zero_grads(params: ParamSet) -> dict:
    return {name: np.zeros_like(getattr(params, name)) for name in _PARAM_FIELDS}


# ---------------------------------------------------------------------------
# layer primitives (batched, stride-2 3x3 conv with zero padding 1)


def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    f = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::2, ::2]
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * 9)
    y = cols @ w.reshape(f, -1).T + b
    y = y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    cache = ((n, c, h, wd), cols, w)
    return y, cache


def _conv_backward(dy, cache):
    (n, c, h, wd), cols, w = cache
    f = w.shape[0]
    ho, wo = dy.shape[2], dy.shape[3]
    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, f)
    dw = (dy_mat.T @ cols).reshape(w.shape)
    db = dy_mat.sum(axis=0)
    dwin = (dy_mat @ w.reshape(f, -1)).reshape(n, ho, wo, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i : i + 2 * ho : 2, j : j + 2 * wo : 2] += dwin[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    return dxp[:, :, 1 : h + 1, 1 : wd + 1], dw, db


def _encoder_forward(p: ParamSet, x):
    c1, k1 = _conv_forward(x, p.conv1_w, p.conv1_b)
    r1 = np.maximum(c1, 0.0)
    c2, k2 = _conv_forward(r1, p.conv2_w, p.conv2_b)
    r2 = np.maximum(c2, 0.0)
    c3, k3 = _conv_forward(r2, p.conv3_w, p.conv3_b)
    r3 = np.maximum(c3, 0.0)
    g = r3.mean(axis=(2, 3))
    f = g @ p.feat_w.T + p.feat_b
    cache = (k1, c1, k2, c2, k3, c3, r3.shape, g)
    return f, cache


def _encoder_backward(p: ParamSet, cache, df, grads):
    k1, c1, k2, c2, k3, c3, r3_shape, g = cache
    grads["feat_w"] += df.T @ g
    grads["feat_b"] += df.sum(axis=0)
    dg = df @ p.feat_w
    _, _, ho, wo = r3_shape
    dr3 = np.broadcast_to(dg[:, :, None, None] / (ho * wo), r3_shape)
    dc3 = np.where(c3 > 0, dr3, 0.0)
    dr2, dw3, db3 = _conv_backward(dc3, k3)
    grads["conv3_w"] += dw3
    grads["conv3_b"] += db3
    dc2 = np.where(c2 > 0, dr2, 0.0)
    dr1, dw2, db2 = _conv_backward(dc2, k2)
    grads["conv2_w"] += dw2
    grads["conv2_b"] += db2
    dc1 = np.where(c1 > 0, dr1, 0.0)
    _, dw1, db1 = _conv_backward(dc1, k1)
    grads["conv1_w"] += dw1
    grads["conv1_b"] += db1


def _check_input(params: ParamSet, x, name):
    x = np.asarray(x, dtype=np.float64)
    want = (params.D, params.image_size, params.image_size)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != want:
        raise ValueError(f"{name}: expected shape (N,)+{want}, got {x.shape}")
    return x


def encode_batch(params: ParamSet, left, right):
    """Binocular features (N, 64) plus the cache for the reverse pass."""
    left = _check_input(params, left, "left")
    right = _check_input(params, right, "right")
    if left.shape[0] != right.shape[0]:
        raise ValueError("left and right batches disagree on length")
    fl, cl = _encoder_forward(params, left)
    fr, cr = _encoder_forward(params, right)
    return np.concatenate([fl, fr], axis=1), (cl, cr)


def encode(params: ParamSet, left, right) -> np.ndarray:
    """Single-sample binocular feature, length 64 (left block then right)."""
    f, _ = encode_batch(params, left, right)
    return f[0]


def _dense_head_forward(feat, w1, b1, w2, b2):
    h1 = feat @ w1.T + b1
    a1 = np.maximum(h1, 0.0)
    out = a1 @ w2.T + b2
    return out, (feat, h1, a1)


def _dense_head_backward(dout, head_cache, w1, w2, grads, prefix):
    feat, h1, a1 = head_cache
    grads[f"{prefix}2_w"] += dout.T @ a1
    grads[f"{prefix}2_b"] += dout.sum(axis=0)
    da1 = dout @ w2
    dh1 = np.where(h1 > 0, da1, 0.0)
    grads[f"{prefix}1_w"] += dh1.T @ feat
    grads[f"{prefix}1_b"] += dh1.sum(axis=0)
    return dh1 @ w1


def baseline_forward_batch(params: ParamSet, left, right):
    feat, enc_cache = encode_batch(params, left, right)
    out, head_cache = _dense_head_forward(
        feat, params.base1_w, params.base1_b, params.base2_w, params.base2_b
    )
    return out, ("baseline", enc_cache, head_cache)


def siamese_forward_batch(params: ParamSet, q_left, q_right, r_left, r_right):
    fq, cq = encode_batch(params, q_left, q_right)
    fr, cr = encode_batch(params, r_left, r_right)
    z = np.concatenate([fq, fr], axis=1)
    out, head_cache = _dense_head_forward(
        z, params.siam1_w, params.siam1_b, params.siam2_w, params.siam2_b
    )
    return out, ("siamese", cq, cr, head_cache)


def backward(params: ParamSet, cache, loss_grad) -> ParamSet:
    """Exact gradients of the cached forward pass; mirrors ParamSet."""
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.ndim == 1:
        loss_grad = loss_grad[None]
    grads = zero_grads(params)
    kind = cache[0]
    if kind == "baseline":
        _, enc_cache, head_cache = cache
        dfeat = _dense_head_backward(
            loss_grad, head_cache, params.base1_w, params.base2_w, grads, "base"
        )
        cl, cr = enc_cache
        _encoder_backward(params, cl, dfeat[:, :32], grads)
        _encoder_backward(params, cr, dfeat[:, 32:], grads)
    elif kind == "siamese":
        _, cq, cr, head_cache = cache
        dz = _dense_head_backward(
            loss_grad, head_cache, params.siam1_w, params.siam2_w, grads, "siam"
        )
        for enc_cache, dpart in ((cq, dz[:, :64]), (cr, dz[:, 64:])):
            cl, crr = enc_cache
            _encoder_backward(params, cl, dpart[:, :32], grads)
            _encoder_backward(params, crr, dpart[:, 32:], grads)
    else:  # pragma: no cover - caches are produced only by the two forwards
        raise ValueError(f"unknown cache kind {kind!r}")
    return params.with_arrays([grads[name] for name in _PARAM_FIELDS])


def _as_sample(s) -> Tuple[np.ndarray, np.ndarray]:
    if hasattr(s, "left") and hasattr(s, "right"):
        return s.left, s.right
    left, right = s
    return left, right


def forward_baseline(params: ParamSet, sample) -> np.ndarray:
    """Absolute gaze prediction (degrees) for one binocular sample."""
    left, right = _as_sample(sample)
    out, _ = baseline_forward_batch(params, left, right)
    return out[0]


def forward_siamese(params: ParamSet, query_sample, reference_sample) -> np.ndarray:
    """Gaze displacement query minus reference for one sample pair."""
    ql, qr = _as_sample(query_sample)
    rl, rr = _as_sample(reference_sample)
    out, _ = siamese_forward_batch(params, ql, qr, rl, rr)
    return out[0]


class NetModel:
    """A trained ParamSet bound to its head selection and input modality."""

    def __init__(self, params: ParamSet, kind: str, modality: Modality):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        self.params = params
        self.kind = kind
        self.modality = modality

    def features(self, left, right) -> np.ndarray:
        f, _ = encode_batch(self.params, left, right)
        return f

    def absolute_from_features(self, feat) -> np.ndarray:
        out, _ = _dense_head_forward(
            np.atleast_2d(feat),
            self.params.base1_w,
            self.params.base1_b,
            self.params.base2_w,
            self.params.base2_b,
        )
        return out

    def delta_from_features(self, feat_query, feat_reference) -> np.ndarray:
        z = np.concatenate([np.atleast_2d(feat_query), np.atleast_2d(feat_reference)], axis=1)
        out, _ = _dense_head_forward(
            z, self.params.siam1_w, self.params.siam1_b, self.params.siam2_w, self.params.siam2_b
        )
        return out


# ---------------------------------------------------------------------------
# checkpoint serialization

_CKPT_MAGIC = b"PETC"
_CKPT_HEADER = struct.Struct("<4sBBBBI")
_KIND_CODES = {"baseline": 0, "siamese": 1}
_MODALITY_CODES = {Modality.POLARIZATION3: 0, Modality.INTENSITY3: 1, Modality.INTENSITY1: 2}


def save_checkpoint(path, params: ParamSet, kind: str, modality: Modality) -> None:
    """Write magic, version, descriptor (kind, D, modality, image size),
    then every parameter plane as little-endian 64-bit floats."""
    if kind not in _KIND_CODES:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    with open(path, "wb") as fh:
        fh.write(
            _CKPT_HEADER.pack(
                _CKPT_MAGIC, 1, _KIND_CODES[kind], params.D, _MODALITY_CODES[modality], params.image_size
            )
        )
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetModel:
    with open(path, "rb") as fh:
        header = fh.read(_CKPT_HEADER.size)
        if len(header) < _CKPT_HEADER.size:
            raise OSError(f"{path}: truncated header")
        magic, version, kind_code, d, mod_code, image_size = _CKPT_HEADER.unpack(header)
        if magic != _CKPT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        kinds = {v: k for k, v in _KIND_CODES.items()}
        mods = {v: k for k, v in _MODALITY_CODES.items()}
        if kind_code not in kinds or mod_code not in mods or d not in (1, 3):
            raise FormatError(f"{path}: invalid architecture descriptor")
        if image_size not in VALID_IMAGE_SIZES:
            raise FormatError(f"{path}: invalid image size {image_size}")
        payload = fh.read()
    shapes = _expected_shapes(d)
    expected = sum(int(np.prod(shapes[n])) for n in _PARAM_FIELDS)
    if len(payload) < expected * 8:
        raise OSError(f"{path}: truncated payload")
    if len(payload) > expected * 8:
        raise FormatError(f"{path}: trailing bytes")
    flat = np.frombuffer(payload, dtype="<f8")
    arrays = []
    pos = 0
    for name in _PARAM_FIELDS:
        size = int(np.prod(shapes[name]))
        arrays.append(flat[pos : pos + size].reshape(shapes[name]).copy())
        pos += size
    params = ParamSet(d, image_size, *arrays)
    return NetModel(params, kinds[kind_code], mods[mod_code])
