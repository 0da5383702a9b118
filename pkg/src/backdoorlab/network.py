"""Model composition, SGD training, channel masks, and checkpoints.

A model is an ordered list of layer descriptions validated for shape
compatibility at construction, plus a separate `Parameters` object holding
the learned weights and biases. Channel pruning is implemented as a
`PruneMask`: the masked channels' post-activation outputs are zeroed in the
forward pass (and the mirrored gradient is zeroed in the backward pass), so
their parameters are frozen during training. This is equivalent to removing
the channels for every metric defined here, and restoring a channel is a
mask flip.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from . import tensor
from .data import Dataset
from .rng import Rng, derive_seed

CHECKPOINT_MAGIC = b"FPN1"


class DivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss."""


class CheckpointError(ValueError):
    """Raised for malformed or inconsistent checkpoint files."""


@dataclass(frozen=True)
class Conv:
    in_channels: int
    out_channels: int
    kh: int
    kw: int
    stride: int = 1
    padding: int = 0
    relu: bool = True


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    relu: bool = True


@dataclass(frozen=True)
class Output:
    """Final fully-connected layer producing class logits; exactly one per model."""

    in_features: int
    out_features: int


Layer = Union[Conv, MaxPool, Flatten, Dense, Output]


def _conv_out(size: int, k: int, stride: int, padding: int, name: str) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise ValueError(f"layer does not compose: {name}={size} with kernel {k}, "
                         f"padding {padding} is not divisible by stride {stride}")
    return span // stride + 1


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyper-parameters: input shape plus an ordered layer list."""

    input_shape: tuple[int, int, int]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if len(self.input_shape) != 3:
            raise ValueError("input_shape must be (C, H, W)")
        if not self.layers:
            raise ValueError("model needs at least one layer")
        outputs = [i for i, l in enumerate(self.layers) if isinstance(l, Output)]
        if len(outputs) != 1 or outputs[0] != len(self.layers) - 1:
            raise ValueError("model must have exactly one output layer, last in the list")
        self.layer_shapes()  # validates composition

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Output shape of every layer (batch dimension omitted)."""
        shape = self.input_shape
        shapes = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: conv needs a 3-D input, got {shape}")
                c, h, w = shape
                if layer.in_channels != c:
                    raise ValueError(f"layer {i}: conv expects C={layer.in_channels}, "
                                     f"previous layer produces C={c}")
                shape = (layer.out_channels,
                         _conv_out(h, layer.kh, layer.stride, layer.padding, "H"),
                         _conv_out(w, layer.kw, layer.stride, layer.padding, "W"))
            elif isinstance(layer, MaxPool):
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: maxpool needs a 3-D input, got {shape}")
                c, h, w = shape
                if h < layer.window or w < layer.window:
                    raise ValueError(f"layer {i}: {h}x{w} input smaller than window {layer.window}")
                shape = (c, (h - layer.window) // layer.stride + 1,
                         (w - layer.window) // layer.stride + 1)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, (Dense, Output)):
                if len(shape) != 1:
                    raise ValueError(f"layer {i}: fully-connected needs flat input, got {shape}")
                if layer.in_features != shape[0]:
                    raise ValueError(f"layer {i}: expects N={layer.in_features}, "
                                     f"previous layer produces N={shape[0]}")
                shape = (layer.out_features,)
            else:
                raise ValueError(f"unknown layer type {type(layer).__name__}")
            shapes.append(shape)
        return shapes

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_features

    @property
    def last_conv(self) -> Optional[int]:
        for i in range(len(self.layers) - 1, -1, -1):
            if isinstance(self.layers[i], Conv):
                return i
        return None

    def layer_channels(self, layer: int) -> int:
        l = self.layers[layer]
        if isinstance(l, Conv):
            return l.out_channels
        if isinstance(l, (Dense, Output)):
            return l.out_features
        raise ValueError(f"layer {layer} ({type(l).__name__}) has no output channels")

    def to_json(self) -> dict:
        def enc(layer):
            if isinstance(layer, Conv):
                return {"kind": "conv", "in": layer.in_channels, "out": layer.out_channels,
                        "kh": layer.kh, "kw": layer.kw, "stride": layer.stride,
                        "padding": layer.padding, "relu": layer.relu}
            if isinstance(layer, MaxPool):
                return {"kind": "maxpool", "window": layer.window, "stride": layer.stride}
            if isinstance(layer, Flatten):
                return {"kind": "flatten"}
            if isinstance(layer, Dense):
                return {"kind": "dense", "in": layer.in_features, "out": layer.out_features,
                        "relu": layer.relu}
            return {"kind": "output", "in": layer.in_features, "out": layer.out_features}

        return {"input_shape": list(self.input_shape),
                "layers": [enc(l) for l in self.layers]}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        def dec(d):
            kind = d.get("kind")
            if kind == "conv":
                return Conv(d["in"], d["out"], d["kh"], d["kw"], d["stride"],
                            d["padding"], d["relu"])
            if kind == "maxpool":
                return MaxPool(d["window"], d["stride"])
            if kind == "flatten":
                return Flatten()
            if kind == "dense":
                return Dense(d["in"], d["out"], d["relu"])
            if kind == "output":
                return Output(d["in"], d["out"])
            raise CheckpointError(f"unknown layer kind {kind!r}")

        return cls(input_shape=tuple(obj["input_shape"]),
                   layers=tuple(dec(d) for d in obj["layers"]))


def small_cnn(input_shape: tuple[int, int, int], num_classes: int,
              conv_channels: tuple[int, int] = (8, 16), hidden: int = 64) -> ModelSpec:
    """Default desk-scale 2-conv/2-fc network."""
    c, h, w = input_shape
    c1, c2 = conv_channels
    h4, w4 = (h // 2) // 2, (w // 2) // 2
    return ModelSpec(
        input_shape=input_shape,
        layers=(
            Conv(c, c1, 3, 3, stride=1, padding=1, relu=True),
            MaxPool(2, 2),
            Conv(c1, c2, 3, 3, stride=1, padding=1, relu=True),
            MaxPool(2, 2),
            Flatten(),
            Dense(c2 * h4 * w4, hidden, relu=True),
            Output(hidden, num_classes),
        ),
    )


@dataclass
class Parameters:
    """Learned weights and biases, one (weight, bias) pair per parametric layer."""

    tensors: tuple  # per layer: None or (weight, bias)

    def copy(self) -> "Parameters":
        return Parameters(tuple(
            None if t is None else (t[0].copy(), t[1].copy()) for t in self.tensors
        ))

    def layer(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        t = self.tensors[i]
        if t is None:
            raise ValueError(f"layer {i} has no parameters")
        return t


def params_equal(a: Parameters, b: Parameters) -> bool:
    """Byte-exact equality of two parameter sets."""
    if len(a.tensors) != len(b.tensors):
        return False
    for ta, tb in zip(a.tensors, b.tensors):
        if (ta is None) != (tb is None):
            return False
        if ta is not None:
            if ta[0].shape != tb[0].shape or ta[1].shape != tb[1].shape:
                return False
            if ta[0].tobytes() != tb[0].tobytes() or ta[1].tobytes() != tb[1].tobytes():
                return False
    return True


def _param_shapes(spec: ModelSpec) -> list[Optional[tuple[tuple, tuple]]]:
    shapes = []
    for layer in spec.layers:
        if isinstance(layer, Conv):
            shapes.append(((layer.out_channels, layer.in_channels, layer.kh, layer.kw),
                           (layer.out_channels,)))
        elif isinstance(layer, (Dense, Output)):
            shapes.append(((layer.in_features, layer.out_features), (layer.out_features,)))
        else:
            shapes.append(None)
    return shapes


def validate_parameters(spec: ModelSpec, params: Parameters) -> None:
    expected = _param_shapes(spec)
    if len(params.tensors) != len(expected):
        raise ValueError(f"parameters cover {len(params.tensors)} layers, spec has {len(expected)}")
    for i, (exp, got) in enumerate(zip(expected, params.tensors)):
        if (exp is None) != (got is None):
            raise ValueError(f"layer {i}: parameter presence does not match spec")
        if exp is not None:
            if got[0].shape != exp[0] or got[1].shape != exp[1]:
                raise ValueError(f"layer {i}: parameter shapes {got[0].shape}/{got[1].shape} "
                                 f"do not match spec {exp[0]}/{exp[1]}")
            if not (np.all(np.isfinite(got[0])) and np.all(np.isfinite(got[1]))):
                raise ValueError(f"layer {i}: parameters contain non-finite values")


def init_params(spec: ModelSpec, seed: int) -> Parameters:
    """Seeded Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = Rng(derive_seed(seed, "init"))
    tensors = []
    for layer in spec.layers:
        if isinstance(layer, Conv):
            fan_in = layer.in_channels * layer.kh * layer.kw
            fan_out = layer.out_channels * layer.kh * layer.kw
            shape = (layer.out_channels, layer.in_channels, layer.kh, layer.kw)
        elif isinstance(layer, (Dense, Output)):
            fan_in, fan_out = layer.in_features, layer.out_features
            shape = (layer.in_features, layer.out_features)
        else:
            tensors.append(None)
            continue
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = (rng.uniforms(int(np.prod(shape))) * 2.0 - 1.0).reshape(shape) * limit
        b = np.zeros(shape[0] if isinstance(layer, Conv) else shape[1])
        tensors.append((w, b))
    return Parameters(tuple(tensors))


@dataclass(frozen=True)
class PruneMask:
    """Per-channel liveness for one layer; False marks a pruned channel."""

    layer: int
    live: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "live", tuple(bool(v) for v in self.live))
        if not any(self.live):
            raise ValueError("a prune mask must keep at least one channel live")

    @classmethod
    def all_live(cls, spec: ModelSpec, layer: int) -> "PruneMask":
        return cls(layer=layer, live=(True,) * spec.layer_channels(layer))

    def kill(self, channel: int) -> "PruneMask":
        if not 0 <= channel < len(self.live):
            raise ValueError(f"channel {channel} out of range [0, {len(self.live)})")
        live = list(self.live)
        live[channel] = False
        return PruneMask(layer=self.layer, live=tuple(live))

    def revive(self, channel: int) -> "PruneMask":
        live = list(self.live)
        live[channel] = True
        return PruneMask(layer=self.layer, live=tuple(live))

    @property
    def num_live(self) -> int:
        return sum(self.live)

    def dead_channels(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.live) if not v)

    def live_array(self) -> np.ndarray:
        return np.array(self.live, dtype=np.float64)


def _check_mask(spec: ModelSpec, mask: Optional[PruneMask]) -> None:
    if mask is None:
        return
    if not 0 <= mask.layer < len(spec.layers):
        raise ValueError(f"mask layer {mask.layer} does not exist in the model")
    channels = spec.layer_channels(mask.layer)
    if len(mask.live) != channels:
        raise ValueError(f"mask covers {len(mask.live)} channels, layer {mask.layer} has {channels}")


def _mask_output(y: np.ndarray, mask: PruneMask) -> np.ndarray:
    live = mask.live_array()
    if y.ndim == 4:
        return y * live[None, :, None, None]
    return y * live[None, :]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int
    mask: Optional[PruneMask] = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


def _forward_pass(spec: ModelSpec, params: Parameters, x: np.ndarray,
                  mask: Optional[PruneMask], capture: Iterable[int] = (),
                  need_caches: bool = False):
    capture = frozenset(capture)
    trace: dict[int, np.ndarray] = {}
    caches: list = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            w, b = params.layer(i)
            z = tensor.conv2d(x, w, b, stride=layer.stride, padding=layer.padding)
            y = tensor.relu(z) if layer.relu else z
            cache = (x, z)
        elif isinstance(layer, MaxPool):
            y = tensor.maxpool2d(x, layer.window, layer.stride)
            cache = (x,)
        elif isinstance(layer, Flatten):
            y = x.reshape(x.shape[0], -1)
            cache = (x.shape,)
        else:  # Dense or Output
            w, b = params.layer(i)
            z = tensor.fully_connected(x, w, b)
            y = tensor.relu(z) if getattr(layer, "relu", False) else z
            cache = (x, z)
        if mask is not None and mask.layer == i:
            y = _mask_output(y, mask)
        if need_caches:
            caches.append(cache)
        if i in capture:
            trace[i] = y
        x = y
    return x, trace, caches


def _backward_pass(spec: ModelSpec, params: Parameters, caches: list,
                   d_out: np.ndarray, mask: Optional[PruneMask]):
    grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    d_y = d_out
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        if mask is not None and mask.layer == i:
            d_y = _mask_output(d_y, mask)  # mirrors the forward zeroing; freezes masked params
        if isinstance(layer, Conv):
            x, z = caches[i]
            d_z = tensor.relu_backward(d_y, z) if layer.relu else d_y
            w, _ = params.layer(i)
            d_y, d_w, d_b = tensor.conv2d_backward(d_z, x, w, stride=layer.stride,
                                                   padding=layer.padding)
            grads[i] = (d_w, d_b)
        elif isinstance(layer, MaxPool):
            (x,) = caches[i]
            d_y = tensor.maxpool2d_backward(d_y, x, layer.window, layer.stride)
        elif isinstance(layer, Flatten):
            (shape,) = caches[i]
            d_y = d_y.reshape(shape)
        else:
            x, z = caches[i]
            d_z = tensor.relu_backward(d_y, z) if getattr(layer, "relu", False) else d_y
            w, _ = params.layer(i)
            d_y, d_w, d_b = tensor.fully_connected_backward(d_z, x, w)
            grads[i] = (d_w, d_b)
    return grads


def _check_batch(spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.ascontiguousarray(batch, dtype=np.float64)
    if batch.ndim != 4:
        raise ValueError(f"batch must be 4-D [B,C,H,W], got {batch.ndim}-D")
    if tuple(batch.shape[1:]) != spec.input_shape:
        raise ValueError(f"batch shape {tuple(batch.shape[1:])} does not match "
                         f"model input {spec.input_shape}")
    return batch


def forward(spec: ModelSpec, params: Parameters, batch: np.ndarray,
            mask: Optional[PruneMask] = None,
            capture: Iterable[int] = ()) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Run the network; returns logits plus post-activation traces for `capture` layers.

    Masked channels contribute exactly zero activation, and their traces are
    all-zero.
    """
    batch = _check_batch(spec, batch)
    _check_mask(spec, mask)
    logits, trace, _ = _forward_pass(spec, params, batch, mask, capture=capture)
    return logits, trace


def train(spec: ModelSpec, init: Parameters, data: Dataset, cfg: TrainConfig) -> Parameters:
    """Seeded, shuffled mini-batch SGD on cross-entropy loss.

    Bit-identical results for identical inputs and seed. Channels masked by
    cfg.mask stay zeroed in every forward pass and their parameters receive
    no updates.
    """
    if len(data) == 0:
        raise ValueError("training dataset is empty")
    if data.labels.max() >= spec.num_classes:
        raise ValueError(f"dataset label {int(data.labels.max())} out of range "
                         f"[0, {spec.num_classes})")
    validate_parameters(spec, init)
    _check_mask(spec, cfg.mask)
    params = init.copy()
    if cfg.epochs == 0:
        return params

    rng = Rng(derive_seed(cfg.seed, "shuffle"))
    images, labels = data.images, data.labels
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        for batch_idx, start in enumerate(range(0, len(data), cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            # divergence is detected and reported below; keep numpy quiet about it
            with np.errstate(over="ignore", invalid="ignore"):
                logits, _, caches = _forward_pass(spec, params, images[sel], cfg.mask,
                                                  need_caches=True)
                loss, d_logits = tensor.softmax_cross_entropy(logits, labels[sel])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training diverged (non-finite loss) at epoch {epoch}, batch {batch_idx}"
                )
            grads = _backward_pass(spec, params, caches, d_logits, cfg.mask)
            for i, (d_w, d_b) in grads.items():
                w, b = params.tensors[i]
                w -= lr * d_w
                b -= lr * d_b
    return params


def layer_input(spec: ModelSpec, params: Parameters, batch: np.ndarray, layer: int,
                mask: Optional[PruneMask] = None) -> np.ndarray:
    """The tensor feeding the given layer for this batch."""
    if not 0 <= layer < len(spec.layers):
        raise ValueError(f"layer {layer} does not exist in the model")
    return _prefix_forward(spec, params, _check_batch(spec, batch), layer, mask)


def _prefix_forward(spec: ModelSpec, params: Parameters, x: np.ndarray, upto: int,
                    mask: Optional[PruneMask]) -> np.ndarray:
    for i, layer in enumerate(spec.layers):
        if i == upto:
            return x
        if isinstance(layer, Conv):
            w, b = params.layer(i)
            z = tensor.conv2d(x, w, b, stride=layer.stride, padding=layer.padding)
            y = tensor.relu(z) if layer.relu else z
        elif isinstance(layer, MaxPool):
            y = tensor.maxpool2d(x, layer.window, layer.stride)
        elif isinstance(layer, Flatten):
            y = x.reshape(x.shape[0], -1)
        else:
            w, b = params.layer(i)
            z = tensor.fully_connected(x, w, b)
            y = tensor.relu(z) if getattr(layer, "relu", False) else z
        if mask is not None and mask.layer == i:
            y = _mask_output(y, mask)
        x = y
    return x


def channel_activation_means(spec: ModelSpec, params: Parameters, images: np.ndarray,
                             layer: int, mask: Optional[PruneMask] = None,
                             batch_size: int = 256) -> np.ndarray:
    """Mean post-activation per channel, averaged over samples and spatial positions."""
    if len(images) == 0:
        raise ValueError("cannot profile an empty image set")
    channels = spec.layer_channels(layer)
    total = np.zeros(channels)
    positions = None
    for start in range(0, len(images), batch_size):
        _, trace = forward(spec, params, images[start:start + batch_size],
                           mask=mask, capture=(layer,))
        act = trace[layer]
        if act.ndim == 4:
            positions = act.shape[2] * act.shape[3]
            total += act.sum(axis=(0, 2, 3))
        else:
            positions = 1
            total += act.sum(axis=0)
    return total / (len(images) * positions)


def channel_response_max(spec: ModelSpec, params: Parameters, images: np.ndarray,
                         layer: int, batch_size: int = 256) -> np.ndarray:
    """Per-channel max over samples/positions of the layer's bias-free linear response."""
    l = spec.layers[layer]
    if not isinstance(l, (Conv, Dense, Output)):
        raise ValueError(f"layer {layer} ({type(l).__name__}) has no linear response")
    w, _ = params.layer(layer)
    channels = spec.layer_channels(layer)
    best = np.full(channels, -np.inf)
    for start in range(0, len(images), batch_size):
        batch = _check_batch(spec, images[start:start + batch_size])
        x = _prefix_forward(spec, params, batch, layer, mask=None)
        if isinstance(l, Conv):
            z = tensor.conv2d(x, w, np.zeros(channels), stride=l.stride, padding=l.padding)
            best = np.maximum(best, z.max(axis=(0, 2, 3)))
        else:
            z = tensor.fully_connected(x, w, np.zeros(channels))
            best = np.maximum(best, z.max(axis=0))
    return best


def save_checkpoint(spec: ModelSpec, params: Parameters, path) -> None:
    """Write magic, length-prefixed JSON header, then little-endian float64 payload."""
    validate_parameters(spec, params)
    tensors_meta = []
    payload = bytearray()
    for i, t in enumerate(params.tensors):
        if t is None:
            continue
        w, b = t
        tensors_meta.append({"layer": i, "weight": list(w.shape), "bias": list(b.shape)})
        payload += w.astype("<f8").tobytes()
        payload += b.astype("<f8").tobytes()
    header = {"format": 1, "spec": spec.to_json(), "tensors": tensors_meta}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(bytes(payload))


def load_checkpoint(path) -> tuple[ModelSpec, Parameters]:
    """Inverse of save_checkpoint; byte-exact round trip."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (header_len,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from e
    try:
        spec = ModelSpec.from_json(header["spec"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: invalid model description: {e}") from e

    expected = _param_shapes(spec)
    meta = header.get("tensors", [])
    meta_by_layer = {m["layer"]: m for m in meta}
    offset = 8 + header_len
    tensors = []
    for i, exp in enumerate(expected):
        if exp is None:
            tensors.append(None)
            continue
        m = meta_by_layer.get(i)
        if m is None:
            raise CheckpointError(f"{path}: header missing tensors for layer {i}")
        w_shape, b_shape = tuple(m["weight"]), tuple(m["bias"])
        if w_shape != exp[0] or b_shape != exp[1]:
            raise CheckpointError(f"{path}: layer {i} shapes {w_shape}/{b_shape} "
                                  f"inconsistent with model ({exp[0]}/{exp[1]})")
        arrays = []
        for shape in (w_shape, b_shape):
            count = int(np.prod(shape))
            end = offset + 8 * count
            if end > len(blob):
                raise CheckpointError(f"{path}: truncated tensor data at layer {i}")
            arr = np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
            arrays.append(arr)
            offset = end
        tensors.append((arrays[0], arrays[1]))
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} unexpected trailing bytes")
    params = Parameters(tuple(tensors))
    validate_parameters(spec, params)
    return spec, params
