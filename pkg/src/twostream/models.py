"""Layer layouts, toy two-stream networks, and first-layer cross-modality transfer."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import tensor as T
from . import tsr

# ---------------------------------------------------------------------------
# layer descriptors


@dataclass(frozen=True)
class Conv:
    in_ch: int
    out_ch: int
    k: int
    stride: int = 1
    pad: int = 0
    kind = "conv"


@dataclass(frozen=True)
class Pool:
    window: int
    stride: int
    kind = "pool"


@dataclass(frozen=True)
class ReLU:
    kind = "relu"


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"


@dataclass(frozen=True)
class Dropout:
    ratio: float
    kind = "dropout"


@dataclass(frozen=True)
class Linear:
    in_dim: int
    out_dim: int
    kind = "linear"


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"


Layer = Union[Conv, Pool, ReLU, Flatten, Dropout, Linear, Softmax]
LayerLayout = Sequence[Layer]


class LayoutError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"layer {index}: {message}")
        self.index = index


def infer_shapes(layout: LayerLayout, input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Per-sample output shape of every layer, checking that dims chain."""
    shape = tuple(input_shape)
    shapes = []
    for i, layer in enumerate(layout):
        if isinstance(layer, Conv):
            if len(shape) != 3 or shape[0] != layer.in_ch:
                raise LayoutError(i, f"conv expects {layer.in_ch} input channels, got shape {shape}")
            ho, wo = T.conv_output_hw(shape[1], shape[2], layer.k, layer.k, layer.stride, layer.pad)
            if ho < 1 or wo < 1:
                raise LayoutError(i, f"conv kernel {layer.k} does not fit input {shape}")
            shape = (layer.out_ch, ho, wo)
        elif isinstance(layer, Pool):
            if len(shape) != 3 or layer.window > min(shape[1:]):
                raise LayoutError(i, f"pool window {layer.window} does not fit input {shape}")
            shape = (
                shape[0],
                (shape[1] - layer.window) // layer.stride + 1,
                (shape[2] - layer.window) // layer.stride + 1,
            )
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Linear):
            if shape != (layer.in_dim,):
                raise LayoutError(i, f"linear expects input dim {layer.in_dim}, got shape {shape}")
            shape = (layer.out_dim,)
        elif isinstance(layer, Dropout):
            if not 0.0 <= layer.ratio < 1.0:
                raise LayoutError(i, f"dropout ratio {layer.ratio} outside [0, 1)")
        shapes.append(shape)
    return shapes


def layer_params(layer: Layer) -> int:
    if isinstance(layer, Conv):
        return layer.k * layer.k * layer.in_ch * layer.out_ch + layer.out_ch
    if isinstance(layer, Linear):
        return layer.in_dim * layer.out_dim + layer.out_dim
    return 0


def param_count(layout: LayerLayout) -> tuple[list[int], int]:
    """Per-layer and total parameter counts."""
    per_layer = [layer_params(layer) for layer in layout]
    return per_layer, sum(per_layer)


def fc_param_count(layout: LayerLayout) -> int:
    return sum(layer_params(layer) for layer in layout if isinstance(layer, Linear))


def conv_param_count(layout: LayerLayout) -> int:
    return sum(layer_params(layer) for layer in layout if isinstance(layer, Conv))


VGG16_CONV = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M")


def vgg16_layout(
    num_classes: int = 101, in_channels: int = 3, dropout: tuple[float, float] = (0.9, 0.9)
) -> list[Layer]:
    """Full-size VGG-16 geometry (224 x 224 input), used for counting only."""
    layout: list[Layer] = []
    ch = in_channels
    for v in VGG16_CONV:
        if v == "M":
            layout.append(Pool(2, 2))
        else:
            layout += [Conv(ch, v, 3, 1, 1), ReLU()]
            ch = v
    layout += [
        Flatten(),
        Linear(512 * 7 * 7, 4096), ReLU(), Dropout(dropout[0]),
        Linear(4096, 4096), ReLU(), Dropout(dropout[1]),
        Linear(4096, num_classes), Softmax(),
    ]
    return layout


# ---------------------------------------------------------------------------
# toy configurations

STREAM_CHANNELS = {"spatial": 3, "temporal": 20}
STREAM_DROPOUT = {"spatial": (0.9, 0.9), "temporal": (0.9, 0.8)}


def toy_layout(
    in_channels: int, num_classes: int, input_size: int = 224, hidden: int = 64,
    dropout: tuple[float, float] = (0.9, 0.9),
) -> list[Layer]:
    conv = [
        Conv(in_channels, 8, 3, 1, 1), ReLU(), Pool(2, 2),
        Conv(8, 16, 3, 1, 1), ReLU(), Pool(2, 2),
        Flatten(),
    ]
    flat = infer_shapes(conv, (in_channels, input_size, input_size))[-1][0]
    return conv + [
        Dropout(dropout[0]), Linear(flat, hidden), ReLU(),
        Dropout(dropout[1]), Linear(hidden, num_classes),
    ]


@dataclass
class ModelConfig:
    stream: str
    num_classes: int
    input_size: int = 224
    hidden: int = 64
    dropout: tuple[float, float] | None = None
    seed: int = 0
    layout: list[Layer] = field(default=None)

    def __post_init__(self):
        if self.stream not in STREAM_CHANNELS:
            raise ValueError(f"stream must be 'spatial' or 'temporal', got {self.stream!r}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        if self.dropout is None:
            self.dropout = STREAM_DROPOUT[self.stream]
        self.dropout = tuple(float(r) for r in self.dropout)
        if self.layout is None:
            self.layout = toy_layout(
                self.in_channels, self.num_classes, self.input_size, self.hidden, self.dropout
            )
        first = next((l for l in self.layout if isinstance(l, Conv)), None)
        if first is not None and first.in_ch != self.in_channels:
            raise ValueError(
                f"{self.stream} stream takes {self.in_channels} channels, layout starts with {first.in_ch}"
            )

    @property
    def in_channels(self) -> int:
        return STREAM_CHANNELS[self.stream]

    def to_items(self) -> dict[str, str]:
        return {
            "stream": self.stream,
            "num_classes": str(self.num_classes),
            "input_size": str(self.input_size),
            "hidden": str(self.hidden),
            "dropout": ",".join(repr(r) for r in self.dropout),
            "seed": str(self.seed),
        }

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "ModelConfig":
        return cls(
            stream=items["stream"],
            num_classes=int(items["num_classes"]),
            input_size=int(items["input_size"]),
            hidden=int(items["hidden"]),
            dropout=tuple(float(r) for r in items["dropout"].split(",")),
            seed=int(items["seed"]),
        )


# ---------------------------------------------------------------------------
# network


class ToyNet:
    """Explicitly composed network over a LayerLayout.

    ``params`` maps names like ``"L0.w"`` to float64 arrays, in layer order.
    ``forward_count`` counts every sample pushed through the first layer.
    """

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.layout = list(cfg.layout)
        self.shapes = infer_shapes(self.layout, (cfg.in_channels, cfg.input_size, cfg.input_size))
        self.params = params if params is not None else init_params(self.layout, cfg.seed)
        self.forward_count = 0
        self.fc_start = next(
            (i + 1 for i, l in enumerate(self.layout) if isinstance(l, Flatten)), 0
        )

    def copy(self) -> "ToyNet":
        return ToyNet(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def forward(self, x, mode="inference", seed=0, iteration=0, sample_offset=0):
        """Logits and the per-layer cache needed by :meth:`backward`."""
        return self.forward_range(x, 0, len(self.layout), mode, seed, iteration, sample_offset)

    def forward_range(self, x, start, stop, mode="inference", seed=0, iteration=0, sample_offset=0):
        x = T.as_tensor(x)
        if start == 0:
            self.forward_count += x.shape[0]
        caches = []
        for i in range(start, stop):
            layer = self.layout[i]
            cache = None
            if isinstance(layer, Conv):
                p = self._conv(i)
                cache, x = x, T.conv2d_forward(x, p)
            elif isinstance(layer, Pool):
                shape = x.shape
                x, arg = T.maxpool_forward(x, layer.window, layer.stride)
                cache = (arg, shape)
            elif isinstance(layer, ReLU):
                cache, x = x, T.relu(x)
            elif isinstance(layer, Flatten):
                cache, x = x.shape, x.reshape(x.shape[0], -1)
            elif isinstance(layer, Dropout):
                if mode == "train" and layer.ratio > 0:
                    mask = sample_masks(x.shape, layer.ratio, seed, i, iteration, sample_offset)
                    x = T.dropout_apply(x, T.DropoutState(layer.ratio, "train", mask=mask))
                    cache = mask
            elif isinstance(layer, Linear):
                cache, x = x, T.linear_forward(x, self.params[f"L{i}.w"], self.params[f"L{i}.b"])
            elif isinstance(layer, Softmax):
                x = T.softmax(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, grad):
        return self.backward_range(caches, grad, 0, len(self.layout))

    def backward_range(self, caches, grad, start, stop):
        """Gradients of every parameter in ``[start, stop)`` plus the input gradient."""
        grads: dict[str, np.ndarray] = {}
        for i in reversed(range(start, stop)):
            layer, cache = self.layout[i], caches[i - start]
            if isinstance(layer, Conv):
                grad, gw, gb = T.conv2d_backward(cache, self._conv(i), grad)
                grads[f"L{i}.w"], grads[f"L{i}.b"] = gw, gb
            elif isinstance(layer, Pool):
                arg, shape = cache
                grad = T.maxpool_backward(arg, grad, shape)
            elif isinstance(layer, ReLU):
                grad = T.relu_backward(cache, grad)
            elif isinstance(layer, Flatten):
                grad = grad.reshape(cache)
            elif isinstance(layer, Dropout):
                if cache is not None:
                    grad = T.dropout_backward(grad, cache, layer.ratio)
            elif isinstance(layer, Linear):
                grad, gw, gb = T.linear_backward(cache, self.params[f"L{i}.w"], grad)
                grads[f"L{i}.w"], grads[f"L{i}.b"] = gw, gb
            elif isinstance(layer, Softmax):
                raise ValueError("backward through a Softmax layer is not supported; use the loss")
        ordered = {k: grads[k] for k in self.params if k in grads}
        return grad, ordered

    def predict_scores(self, x, space="softmax") -> np.ndarray:
        logits, _ = self.forward(x)
        return T.softmax(logits) if space == "softmax" else logits

    def _conv(self, i: int) -> T.ConvParams:
        layer = self.layout[i]
        return T.ConvParams(self.params[f"L{i}.w"], self.params[f"L{i}.b"], layer.stride, layer.pad)


def sample_masks(shape, ratio, seed, layer_id, iteration, sample_offset=0) -> np.ndarray:
    """Dropout keep-masks, one independently keyed row per global sample index.

    Keying by the sample's global index makes the mask independent of how a
    batch is split across workers.
    """
    n, rest = shape[0], shape[1:]
    return np.stack(
        [T.dropout_mask(rest, ratio, seed, layer_id, iteration, sample_offset + r) for r in range(n)]
    )


def init_params(layout: LayerLayout, seed: int) -> dict[str, np.ndarray]:
    """Scaled-normal init, std = sqrt(2 * keep / fan_in); zero biases.

    ``keep`` is 1 - ratio of a dropout layer feeding the weight layer (1 when
    there is none), which cancels the 1 / keep variance boost of inverted
    dropout in train mode.
    """
    params = {}
    keep = 1.0
    for i, layer in enumerate(layout):
        if isinstance(layer, Dropout):
            keep = 1.0 - layer.ratio
            continue
        if isinstance(layer, Conv):
            fan_in = layer.in_ch * layer.k * layer.k
            shape = (layer.out_ch, layer.in_ch, layer.k, layer.k)
            bias = layer.out_ch
        elif isinstance(layer, Linear):
            fan_in = layer.in_dim
            shape = (layer.in_dim, layer.out_dim)
            bias = layer.out_dim
        else:
            continue
        rng = T.keyed_generator(seed, i)
        params[f"L{i}.w"] = rng.normal(0.0, np.sqrt(2.0 * keep / fan_in), size=shape)
        keep = 1.0
        params[f"L{i}.b"] = np.zeros(bias)
    return params


def build_toy_model(cfg: ModelConfig) -> ToyNet:
    return ToyNet(cfg)


# ---------------------------------------------------------------------------
# cross-modality initialization


def adapt_first_layer(weights: np.ndarray, target_channels: int) -> np.ndarray:
    """Average first-layer filters over input channels, then replicate target_channels times.

    No magnitude rescaling is applied, so a constant input produces
    target_channels / in_channels times the original response.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 4 or min(weights.shape) < 1:
        raise ValueError(f"filters must be K x C x h x w, got shape {weights.shape}")
    if target_channels < 1:
        raise ValueError(f"target_channels must be >= 1, got {target_channels}")
    mean = weights.mean(axis=1, keepdims=True)
    return np.repeat(mean, target_channels, axis=1)


def transfer_to_temporal(spatial: ToyNet, cfg: ModelConfig) -> ToyNet:
    """Temporal net initialized from a spatial one: adapted first conv, every other layer copied."""
    net = ToyNet(cfg)
    first = next(i for i, l in enumerate(net.layout) if isinstance(l, Conv))
    for name, value in spatial.params.items():
        if name not in net.params:
            continue
        if name == f"L{first}.w":
            value = adapt_first_layer(value, cfg.in_channels)
        if value.shape != net.params[name].shape:
            raise ValueError(f"cannot transfer {name}: {value.shape} vs {net.params[name].shape}")
        net.params[name] = value.copy()
    return net


# ---------------------------------------------------------------------------
# checkpoints: a directory of TSR1 files plus a manifest of layer order


def save_checkpoint(net: ToyNet, out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "model.cfg", "w") as fh:
        for k, v in net.cfg.to_items().items():
            fh.write(f"{k}={v}\n")
    lines = []
    for name, value in net.params.items():
        fname = name.replace(".", "_") + ".tsr"
        tsr.save(out / fname, value)
        lines.append(f"{name}\t{fname}\t{'x'.join(map(str, value.shape))}\n")
    with open(out / "manifest.txt", "w") as fh:
        fh.writelines(lines)


def load_checkpoint(ckpt_dir: str | os.PathLike) -> ToyNet:
    src = Path(ckpt_dir)
    items = {}
    for line in (src / "model.cfg").read_text().splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            items[k] = v
    cfg = ModelConfig.from_items(items)
    params = {}
    for line in (src / "manifest.txt").read_text().splitlines():
        if not line.strip():
            continue
        name, fname, _ = line.split("\t")
        params[name] = tsr.load(src / fname)
    net = ToyNet(cfg, params)
    expected = init_params(net.layout, 0)
    for name, value in expected.items():
        if name not in params or params[name].shape != value.shape:
            raise ValueError(f"checkpoint {src} missing or misshaped parameter {name}")
    return net
