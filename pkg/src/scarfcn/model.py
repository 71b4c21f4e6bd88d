"""The scar-detection fully convolutional network.

Fixed 4-layer chain: three strided/padded convolutions with ReLU
compress the (500, 3, 6-or-8) strain tensor down to (128, 2, 3), and a
transpose convolution restores the (2, 3, 6) two-channel logit grid
(channel 0 = scar, channel 1 = no-scar).  Shape chain:

    (500, 3, 8|6) -> (32, 3, 6) -> (64, 2, 3) -> (128, 2, 3) -> (2, 3, 6)

Horizontal mode expects input pre-padded by one wrapped column
(bullseye.pad_horizontal, p=1) and uses vertical-only zero padding in
layer 1; "none" mode zero-pads both axes so the geometry is identical.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .bullseye import DEFAULT_MAP, SegmentGridMap, from_grid

ARCH_VERSION = 1
IN_CHANNELS = 500
PADDING_MODES = ("horizontal", "none")
CHECKPOINT_MAGIC = b"FCNS"
CHECKPOINT_VERSION = 1

# (out_ch, in_ch, kh, kw, stride, role); layer-1 zero_pad depends on mode
_ARCH = (
    (32, IN_CHANNELS, 3, 3, (1, 1), "conv"),
    (64, 32, 3, 3, (2, 2), "conv"),
    (128, 64, 3, 3, (1, 1), "conv"),
    (2, 128, 2, 2, (1, 2), "transpose"),
)
_LAYER_PADS = {"horizontal": ((1, 0), (1, 1), (1, 1), (0, 0)),
               "none": ((1, 1), (1, 1), (1, 1), (0, 0))}


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


@dataclass
class FcnParameters:
    layers: list[nn.ConvLayerParams]
    padding_mode: str
    arch_version: int = ARCH_VERSION
    rng_seed: int = 0
    train_config: dict = field(default_factory=dict)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (IN_CHANNELS, 3, 8 if self.padding_mode == "horizontal" else 6)

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def copy(self) -> "FcnParameters":
        return FcnParameters(
            layers=[nn.ConvLayerParams(l.weights.copy(), l.bias.copy(),
                                       l.stride, l.zero_pad)
                    for l in self.layers],
            padding_mode=self.padding_mode,
            arch_version=self.arch_version,
            rng_seed=self.rng_seed,
            train_config=dict(self.train_config),
        )


def init_params(padding_mode: str = "horizontal", seed: int = 0) -> FcnParameters:
    """Seeded uniform +/- sqrt(6/fan_in) weight init, zero bias."""
    if padding_mode not in PADDING_MODES:
        raise ValueError(f"padding_mode must be one of {PADDING_MODES}")
    rng = np.random.default_rng(seed)
    layers = []
    pads = _LAYER_PADS[padding_mode]
    for (out_ch, in_ch, kh, kw, stride, _role), pad in zip(_ARCH, pads):
        fan_in = in_ch * kh * kw
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(out_ch, in_ch, kh, kw))
        layers.append(nn.ConvLayerParams(w, np.zeros(out_ch), stride, pad))
    return FcnParameters(layers=layers, padding_mode=padding_mode, rng_seed=seed)


def forward(params: FcnParameters, x: np.ndarray,
            with_cache: bool = False):
    """Logit grid(s) for one input (C,H,W) or a batch (N,C,H,W)."""
    x = np.asarray(x, dtype=np.float64)
    expect = params.input_shape
    if x.shape[-3:] != expect:
        raise nn.ShapeError(
            f"input shape {x.shape} incompatible with padding_mode "
            f"'{params.padding_mode}' (expects trailing dims {expect})")
    cache = []
    h = x
    for i, layer in enumerate(params.layers):
        role = _ARCH[i][5]
        if role == "conv":
            z, cols = nn.conv2d_forward(h, layer, return_cols=True)
            a = nn.relu_forward(z)
        else:
            z = nn.convtranspose2d_forward(h, layer)
            cols = None
            a = z  # logits: no activation on the output layer
        cache.append((h, z, cols))
        h = a
    if with_cache:
        return h, cache
    return h


def backward(params: FcnParameters, cache, upstream: np.ndarray):
    """Gradients of all layers given d(loss)/d(logits); returns list of bundles."""
    grads: list[nn.GradientBundle] = [None] * len(params.layers)
    g = upstream
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        h, z, cols = cache[i]
        role = _ARCH[i][5]
        if role == "transpose":
            bundle = nn.convtranspose2d_backward(h, layer, g)
        else:
            g = nn.relu_backward(z, g)
            bundle = nn.conv2d_backward(h, layer, g, cols=cols)
        grads[i] = bundle
        g = bundle.d_input
    return grads


@dataclass
class SegmentPrediction:
    logits: np.ndarray       # (2, 3, 6)
    predicted: np.ndarray    # 18 binary values
    scores: np.ndarray       # 18 reals, scar minus no-scar logit


def predict_segments(params: FcnParameters, x: np.ndarray,
                     grid_map: SegmentGridMap = DEFAULT_MAP) -> SegmentPrediction:
    """Per-segment class decisions; ties go to no-scar."""
    logits = forward(params, x)
    scores_grid = (logits[0] - logits[1])[None]  # (1, 3, 6)
    scores = from_grid(scores_grid, grid_map)[:, 0]
    predicted = (scores > 0.0).astype(np.int64)
    return SegmentPrediction(logits=logits, predicted=predicted, scores=scores)


# ---------------------------------------------------------------------------
# checkpoint format: magic | version u32 | header_len u32 | JSON | f64 payload
# ---------------------------------------------------------------------------

def save_checkpoint(params: FcnParameters, path, created_unix: int | None = None) -> None:
    header = {
        "arch_version": params.arch_version,
        "padding_mode": params.padding_mode,
        "layer_shapes": [
            {"weights": list(l.weights.shape), "bias": list(l.bias.shape),
             "stride": list(l.stride), "zero_pad": list(l.zero_pad)}
            for l in params.layers
        ],
        "train_config": params.train_config,
        "rng_seed": params.rng_seed,
        "created_unix": int(time.time()) if created_unix is None else created_unix,
    }
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(
        np.ascontiguousarray(l.weights, dtype="<f8").tobytes()
        + np.ascontiguousarray(l.bias, dtype="<f8").tobytes()
        for l in params.layers
    )
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(hdr)))
        fh.write(hdr)
        fh.write(payload)


def load_checkpoint(path) -> FcnParameters:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic: not a model checkpoint")
    version, hdr_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(blob) < 12 + hdr_len:
        raise CheckpointError("truncated checkpoint: header incomplete")
    try:
        header = json.loads(blob[12 : 12 + hdr_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt header JSON: {exc}") from exc
    for key in ("arch_version", "padding_mode", "layer_shapes"):
        if key not in header:
            raise CheckpointError(f"header missing required field '{key}'")
    if header.get("padding_mode") not in PADDING_MODES:
        raise CheckpointError(
            f"bad padding_mode {header.get('padding_mode')!r} in header")
    shapes = header.get("layer_shapes")
    if not isinstance(shapes, list) or len(shapes) != len(_ARCH):
        raise CheckpointError("bad layer_shapes in header")
    payload = blob[12 + hdr_len :]
    expected = sum(int(np.prod(s["weights"])) + int(np.prod(s["bias"]))
                   for s in shapes)
    if len(payload) != expected * 8:
        raise CheckpointError(
            f"payload holds {len(payload) // 8} floats, header expects {expected}")
    layers = []
    offset = 0
    for s in shapes:
        wn = int(np.prod(s["weights"]))
        bn = int(np.prod(s["bias"]))
        w = np.frombuffer(payload, dtype="<f8", count=wn, offset=offset * 8)
        offset += wn
        b = np.frombuffer(payload, dtype="<f8", count=bn, offset=offset * 8)
        offset += bn
        layers.append(nn.ConvLayerParams(
            w.reshape(s["weights"]).copy(), b.copy(),
            tuple(s["stride"]), tuple(s["zero_pad"])))
    return FcnParameters(
        layers=layers,
        padding_mode=header["padding_mode"],
        arch_version=header["arch_version"],
        rng_seed=header.get("rng_seed", 0),
        train_config=header.get("train_config", {}),
    )
