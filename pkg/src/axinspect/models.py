"""The two classifier architectures over the layer set.

``cnn3d`` stacks the six patch channels along a third spatial axis and runs
a four-conv 3-D trunk into a two-class head.  ``lstm`` encodes each slice
with a shared-weight 2-D trunk and feeds the six feature vectors through an
LSTM whose final hidden state drives the head.  The ``shrunken`` variant
(input 16x16, channel widths /4) exists for gradient checks and desk-scale
runs; checkpoints record which variant they hold.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import layers as L
from .preprocess import PATCH_CHANNELS, PATCH_SIDE, resize_bilinear
from .tensor import ShapeError, Tensor

ARCHS = ("cnn3d", "lstm")
VARIANTS = ("full", "shrunken")
DEFECT_CLASS = 1  # logits index of the defect class

CHECKPOINT_MAGIC = b"AXCK"
CHECKPOINT_VERSION = 1

DEFAULT_PREPROCESS = {
    "patch_side": PATCH_SIDE,
    "channels": PATCH_CHANNELS,
    "crop_factor": 1.5,
    "normalize": "div255",
}


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    variant: str = "full"
    dropout_rate: float = 0.5
    bn_eps: float = 1e-5
    bn_momentum: float = 0.99

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def input_side(self) -> int:
        return PATCH_SIDE if self.variant == "full" else 16

    @property
    def divisor(self) -> int:
        return 1 if self.variant == "full" else 4

    @property
    def conv_channels(self) -> tuple[int, int, int, int]:
        d = self.divisor
        return (8 // d, 16 // d, 32 // d, 64 // d)

    @property
    def trunk_flat(self) -> int:
        # two (conv,conv,pool) blocks: side -> ((side-4)/2 - 4)/2
        side = ((self.input_side - 4) // 2 - 4) // 2
        return side * side * self.conv_channels[3]

    @property
    def dense1_units(self) -> int:
        return 1024 // self.divisor  # cnn3d head width

    @property
    def lstm_units(self) -> int:
        return 2048 // self.divisor  # encoder output == LSTM hidden size

    @property
    def head_units(self) -> int:
        return 512 // self.divisor  # lstm head width


@dataclass
class ModelParams:
    """Trainable weights plus batch-norm running statistics."""

    weights: dict[str, Tensor]
    bn_state: dict[str, np.ndarray]

    def n_parameters(self) -> int:
        return sum(t.size for t in self.weights.values())


# ---------------------------------------------------------------------------
# layer geometry

# cnn3d kernel depths per conv; the second pool window clamps to the
# remaining depth of 1 so the flattened trunk lands on 29*29*64.
_CNN3D_KERNEL_DEPTHS = (2, 2, 2, 1)


def cnn3d_layer_table(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], tuple[int, ...] | None]]:
    """(layer name, output shape, weight shape) in forward order."""
    s = spec.input_side
    c1, c2, c3, c4 = spec.conv_channels
    rows = [("input", (s, s, 6, 1), None)]
    rows.append(("conv1", (s - 2, s - 2, 5, c1), (3, 3, 2, 1, c1)))
    rows.append(("conv2", (s - 4, s - 4, 4, c2), (3, 3, 2, c1, c2)))
    p1 = (s - 4) // 2
    rows.append(("pool1", (p1, p1, 2, c2), None))
    rows.append(("conv3", (p1 - 2, p1 - 2, 1, c3), (3, 3, 2, c2, c3)))
    rows.append(("conv4", (p1 - 4, p1 - 4, 1, c4), (3, 3, 1, c3, c4)))
    p2 = (p1 - 4) // 2
    rows.append(("pool2", (p2, p2, 1, c4), None))
    rows.append(("batchnorm", (p2, p2, 1, c4), None))
    rows.append(("flatten", (spec.trunk_flat,), None))
    rows.append(("dense1", (spec.dense1_units,), (spec.trunk_flat, spec.dense1_units)))
    rows.append(("dense2", (2,), (spec.dense1_units, 2)))
    return rows


def lstm_layer_table(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], tuple[int, ...] | None]]:
    u = spec.lstm_units
    rows = [
        ("encoder", (u,), None),
        ("lstm", (u,), (2 * u, 4 * u)),
        ("dense1", (spec.head_units,), (u, spec.head_units)),
        ("dense2", (2,), (spec.head_units, 2)),
    ]
    return rows


def weight_defs(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init kind) for every trainable block, in a fixed order."""
    c1, c2, c3, c4 = spec.conv_channels
    defs: list[tuple[str, tuple[int, ...], str]] = []

    def conv_block(prefix: str, kernels: list[tuple[int, ...]]):
        for i, kshape in enumerate(kernels, start=1):
            defs.append((f"{prefix}conv{i}.kernel", kshape, "he"))
            defs.append((f"{prefix}conv{i}.bias", (kshape[-1],), "zeros"))

    if spec.arch == "cnn3d":
        kd = _CNN3D_KERNEL_DEPTHS
        conv_block("", [(3, 3, kd[0], 1, c1), (3, 3, kd[1], c1, c2),
                        (3, 3, kd[2], c2, c3), (3, 3, kd[3], c3, c4)])
        defs.append(("bn.gamma", (c4,), "ones"))
        defs.append(("bn.beta", (c4,), "zeros"))
        defs.append(("dense1.weight", (spec.trunk_flat, spec.dense1_units), "he"))
        defs.append(("dense1.bias", (spec.dense1_units,), "zeros"))
        defs.append(("dense2.weight", (spec.dense1_units, 2), "he"))
        defs.append(("dense2.bias", (2,), "zeros"))
    else:
        conv_block("enc.", [(3, 3, 1, c1), (3, 3, c1, c2), (3, 3, c2, c3), (3, 3, c3, c4)])
        defs.append(("enc.bn.gamma", (c4,), "ones"))
        defs.append(("enc.bn.beta", (c4,), "zeros"))
        u = spec.lstm_units
        defs.append(("enc.dense.weight", (spec.trunk_flat, u), "he"))
        defs.append(("enc.dense.bias", (u,), "zeros"))
        defs.append(("lstm.weight", (2 * u, 4 * u), "he"))
        defs.append(("lstm.bias", (4 * u,), "zeros"))
        defs.append(("dense1.weight", (u, spec.head_units), "he"))
        defs.append(("dense1.bias", (spec.head_units,), "zeros"))
        defs.append(("dense2.weight", (spec.head_units, 2), "he"))
        defs.append(("dense2.bias", (2,), "zeros"))
    return defs


def bn_state_defs(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], str]]:
    c4 = spec.conv_channels[3]
    prefix = "bn" if spec.arch == "cnn3d" else "enc.bn"
    return [(f"{prefix}.running_mean", (c4,), "zeros"), (f"{prefix}.running_var", (c4,), "ones")]


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    """Fan-in-scaled uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)), variance 2/fan_in."""
    fan_in = int(np.prod(shape[:-1]))
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(spec: ModelSpec, seed: int, dtype=np.float32) -> ModelParams:
    """Deterministic parameter initialization (bitwise-identical per seed)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    weights: dict[str, Tensor] = {}
    for name, shape, kind in weight_defs(spec):
        if kind == "he":
            arr = he_uniform(rng, shape, dtype)
        elif kind == "ones":
            arr = np.ones(shape, dtype=dtype)
        else:
            arr = np.zeros(shape, dtype=dtype)
        weights[name] = Tensor(arr, requires_grad=True)
    bn_state = {
        name: (np.ones(shape, dtype=dtype) if kind == "ones" else np.zeros(shape, dtype=dtype))
        for name, shape, kind in bn_state_defs(spec)
    }
    return ModelParams(weights=weights, bn_state=bn_state)


# ---------------------------------------------------------------------------
# forward passes


def _check_input(spec: ModelSpec, x: Tensor) -> None:
    want = (spec.input_side, spec.input_side, PATCH_CHANNELS, 1)
    if x.shape != want:
        raise ShapeError(f"{spec.arch}/{spec.variant} expects input {want}, got {x.shape}")


def _trace(trace, name, tensor):
    if trace is not None:
        trace.append((name, tensor.shape))


def _bn_mode(h: Tensor, mode: str) -> str:
    # Batch statistics need >= 2 positions per channel.  The shrunken trunks
    # bottom out at 1x1 feature maps, where normalizing by the (degenerate)
    # input statistics would zero every upstream gradient; fall back to the
    # running-stat path there so the convolutions keep learning.
    return mode if int(np.prod(h.shape[:-1])) >= 2 else "infer"


def forward_cnn3d(
    params: ModelParams,
    spec: ModelSpec,
    x: Tensor,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
    trace: list | None = None,
) -> Tensor:
    _check_input(spec, x)
    w = params.weights
    _trace(trace, "input", x)
    h = L.relu(L.conv3d(x, w["conv1.kernel"], w["conv1.bias"]))
    _trace(trace, "conv1", h)
    h = L.relu(L.conv3d(h, w["conv2.kernel"], w["conv2.bias"]))
    _trace(trace, "conv2", h)
    h = L.maxpool(h, (2, 2, 2))
    _trace(trace, "pool1", h)
    h = L.relu(L.conv3d(h, w["conv3.kernel"], w["conv3.bias"]))
    _trace(trace, "conv3", h)
    h = L.relu(L.conv3d(h, w["conv4.kernel"], w["conv4.bias"]))
    _trace(trace, "conv4", h)
    h = L.maxpool(h, (2, 2, 1 if h.shape[2] == 1 else 2))
    _trace(trace, "pool2", h)
    h = L.batchnorm(h, w["bn.gamma"], w["bn.beta"],
                    params.bn_state["bn.running_mean"], params.bn_state["bn.running_var"],
                    mode=_bn_mode(h, mode), eps=spec.bn_eps, momentum=spec.bn_momentum)
    _trace(trace, "batchnorm", h)
    h = L.flatten(h)
    _trace(trace, "flatten", h)
    h = L.dropout(h, spec.dropout_rate, mode, rng)
    h = L.relu(L.dense(h, w["dense1.weight"], w["dense1.bias"]))
    _trace(trace, "dense1", h)
    h = L.dropout(h, spec.dropout_rate, mode, rng)
    logits = L.dense(h, w["dense2.weight"], w["dense2.bias"])
    _trace(trace, "dense2", logits)
    return logits


def _encode_slice(params: ModelParams, spec: ModelSpec, s: Tensor, mode: str) -> Tensor:
    w = params.weights
    h = L.relu(L.conv2d(s, w["enc.conv1.kernel"], w["enc.conv1.bias"]))
    h = L.relu(L.conv2d(h, w["enc.conv2.kernel"], w["enc.conv2.bias"]))
    h = L.maxpool(h, (2, 2))
    h = L.relu(L.conv2d(h, w["enc.conv3.kernel"], w["enc.conv3.bias"]))
    h = L.relu(L.conv2d(h, w["enc.conv4.kernel"], w["enc.conv4.bias"]))
    h = L.maxpool(h, (2, 2))
    h = L.batchnorm(h, w["enc.bn.gamma"], w["enc.bn.beta"],
                    params.bn_state["enc.bn.running_mean"], params.bn_state["enc.bn.running_var"],
                    mode=_bn_mode(h, mode), eps=spec.bn_eps, momentum=spec.bn_momentum)
    h = L.flatten(h)
    return L.relu(L.dense(h, w["enc.dense.weight"], w["enc.dense.bias"]))


def forward_lstm(
    params: ModelParams,
    spec: ModelSpec,
    x: Tensor,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
    trace: list | None = None,
) -> Tensor:
    _check_input(spec, x)
    w = params.weights
    _trace(trace, "input", x)
    u = spec.lstm_units
    dtype = x.dtype
    h = Tensor(np.zeros(u, dtype=dtype))
    c = Tensor(np.zeros(u, dtype=dtype))
    # fixed six-step unroll: zero-padded channels are consumed like any slice
    for k in range(PATCH_CHANNELS):
        feat = _encode_slice(params, spec, L.take_channel(x, k), mode)
        if k == 0:
            _trace(trace, "encoder", feat)
        h, c = L.lstm_cell(feat, h, c, w["lstm.weight"], w["lstm.bias"])
        _trace(trace, f"lstm_step{k}", h)
    head = L.relu(L.dense(h, w["dense1.weight"], w["dense1.bias"]))
    _trace(trace, "dense1", head)
    head = L.dropout(head, spec.dropout_rate, mode, rng)
    logits = L.dense(head, w["dense2.weight"], w["dense2.bias"])
    _trace(trace, "dense2", logits)
    return logits


def forward(params: ModelParams, spec: ModelSpec, x: Tensor, mode: str = "infer",
            rng: np.random.Generator | None = None, trace: list | None = None) -> Tensor:
    fn = forward_cnn3d if spec.arch == "cnn3d" else forward_lstm
    return fn(params, spec, x, mode, rng, trace)


def p_defect(logits) -> float:
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return float(L.softmax(data)[DEFECT_CLASS])


def model_input(spec: ModelSpec, patch_data: np.ndarray) -> np.ndarray:
    """Adapt a stored 128x128x6x1 patch to the model input side."""
    if patch_data.shape != (PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS, 1):
        raise ShapeError(f"patch data must be {(PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS, 1)}, "
                         f"got {patch_data.shape}")
    side = spec.input_side
    if side == PATCH_SIDE:
        return patch_data
    out = np.zeros((side, side, PATCH_CHANNELS, 1), dtype=np.float32)
    for k in range(PATCH_CHANNELS):
        out[:, :, k, 0] = resize_bilinear(patch_data[:, :, k, 0], side, side)
    return out


def score_patch(params: ModelParams, spec: ModelSpec, patch_data: np.ndarray) -> float:
    """P(defect) for one stored patch in infer mode (no tape, deterministic)."""
    x = Tensor(model_input(spec, patch_data))
    return p_defect(forward(params, spec, x, mode="infer"))


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    spec: ModelSpec
    weights: dict[str, np.ndarray]
    bn_state: dict[str, np.ndarray]
    preprocess: dict = field(default_factory=lambda: dict(DEFAULT_PREPROCESS))
    meta: dict = field(default_factory=dict)

    def to_params(self, dtype=np.float32) -> ModelParams:
        weights = {k: Tensor(v.astype(dtype), requires_grad=True) for k, v in self.weights.items()}
        bn_state = {k: v.astype(dtype) for k, v in self.bn_state.items()}
        return ModelParams(weights=weights, bn_state=bn_state)


def save_checkpoint(path: str | Path, spec: ModelSpec, params: ModelParams,
                    preprocess: dict | None = None, meta: dict | None = None) -> None:
    blocks: list[tuple[str, np.ndarray]] = []
    for name in sorted(params.weights):
        blocks.append((name, params.weights[name].data))
    for name in sorted(params.bn_state):
        blocks.append((name, params.bn_state[name]))
    header = {
        "spec": asdict(spec),
        "preprocess": dict(DEFAULT_PREPROCESS if preprocess is None else preprocess),
        "meta": meta or {},
        "bn_blocks": sorted(params.bn_state),
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(payload)))
        fh.write(payload)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    spec = ModelSpec(**header["spec"])
    off = 12 + hlen
    weights: dict[str, np.ndarray] = {}
    bn_state: dict[str, np.ndarray] = {}
    bn_names = set(header["bn_blocks"])
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", offset=off, count=n).reshape(shape).copy()
        off += 4 * n
        if block["name"] in bn_names:
            bn_state[block["name"]] = arr
        else:
            weights[block["name"]] = arr
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return Checkpoint(spec=spec, weights=weights, bn_state=bn_state,
                      preprocess=header["preprocess"], meta=header["meta"])
