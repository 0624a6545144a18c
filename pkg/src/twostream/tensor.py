"""Dense float64 tensor operations with hand-written backward passes.

Tensors are plain ``numpy.ndarray`` values (row-major, float64). Every
forward function is pure; backward functions take whatever the forward
returned (or the forward inputs) plus the upstream gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when tensor shapes do not line up."""


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


# ---------------------------------------------------------------------------
# convolution


@dataclass
class ConvParams:
    weights: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.bias = as_tensor(self.bias)
        if self.weights.ndim != 4 or min(self.weights.shape) < 1:
            raise ShapeError(f"conv weights must be (out, in, kh, kw), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )
        if self.stride < 1 or self.pad < 0:
            raise ValueError(f"invalid stride={self.stride} / pad={self.pad}")


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, pad: int) -> tuple[int, int]:
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    return ho, wo


def _check_conv(x: np.ndarray, p: ConvParams) -> tuple[int, int]:
    if x.ndim != 4:
        raise ShapeError(f"conv input must be NCHW, got shape {x.shape}")
    out_ch, in_ch, kh, kw = p.weights.shape
    if x.shape[1] != in_ch:
        raise ShapeError(
            f"conv input shape {x.shape} incompatible with weights shape {p.weights.shape}"
        )
    h, w = x.shape[2:]
    if h + 2 * p.pad < kh or w + 2 * p.pad < kw:
        raise ShapeError(
            f"conv input shape {x.shape} too small for weights shape {p.weights.shape} "
            f"with pad={p.pad}"
        )
    return conv_output_hw(h, w, kh, kw, p.stride, p.pad)


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Read-only (N, C, H', W', kh, kw) view of every receptive field."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Cross-correlation plus bias, NCHW in and out."""
    x = as_tensor(x)
    ho, wo = _check_conv(x, p)
    _, _, kh, kw = p.weights.shape
    win = _windows(_pad(x, p.pad), kh, kw, p.stride)[:, :, :ho, :wo]
    out = np.tensordot(win, p.weights, axes=([1, 4, 5], [1, 2, 3]))  # N, H', W', O
    out += p.bias
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(
    x: np.ndarray, p: ConvParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grad_input, grad_weights, grad_bias)`` for :func:`conv2d_forward`."""
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    ho, wo = _check_conv(x, p)
    expected = (x.shape[0], p.weights.shape[0], ho, wo)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} != conv output shape {expected}")
    _, _, kh, kw = p.weights.shape
    s, pad = p.stride, p.pad
    xp = _pad(x, pad)
    win = _windows(xp, kh, kw, s)[:, :, :ho, :wo]
    gw = np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))
    gb = grad_out.sum(axis=(0, 2, 3))
    gcols = np.tensordot(grad_out, p.weights, axes=([1], [0]))  # N, H', W', C, kh, kw
    gcols = gcols.transpose(0, 3, 1, 2, 4, 5)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += gcols[..., i, j]
    gx = gxp[:, :, pad : pad + x.shape[2], pad : pad + x.shape[3]] if pad else gxp
    return np.ascontiguousarray(gx), gw, gb


# ---------------------------------------------------------------------------
# max pooling


def maxpool_forward(x: np.ndarray, window: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Max-pool each window; output dims use floor division.

    Returns the pooled tensor and, for each output element, the flat index of
    the winning element within its (H, W) input plane. Ties go to the first
    element in row-major scan order of the window.
    """
    x = as_tensor(x)
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be >= 1, got {window}, {stride}")
    if x.ndim != 4:
        raise ShapeError(f"maxpool input must be NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(f"pool window {window} larger than input plane {h}x{w}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    taps = np.empty((window * window, n, c, ho, wo), dtype=DTYPE)
    for i in range(window):
        for j in range(window):
            taps[i * window + j] = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    best = np.argmax(taps, axis=0)  # first occurrence wins
    out = np.take_along_axis(taps, best[None], axis=0)[0]
    di, dj = np.divmod(best, window)
    rows = np.arange(ho)[:, None] * stride + di
    cols = np.arange(wo)[None, :] * stride + dj
    return out, (rows * w + cols).astype(np.int64)


def maxpool_backward(
    argmax: np.ndarray, grad_out: np.ndarray, input_shape: Sequence[int]
) -> np.ndarray:
    grad_out = as_tensor(grad_out)
    if argmax.shape != grad_out.shape:
        raise ShapeError(f"argmax shape {argmax.shape} != grad_out shape {grad_out.shape}")
    n, c, h, w = input_shape
    flat = np.zeros((n * c, h * w), dtype=DTYPE)
    rows = np.repeat(np.arange(n * c), argmax[0, 0].size)
    np.add.at(flat, (rows, argmax.reshape(-1)), grad_out.reshape(-1))
    return flat.reshape(n, c, h, w)


# ---------------------------------------------------------------------------
# fully connected, relu, loss


def linear_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"linear input shape {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"linear bias shape {bias.shape} does not match weights {weights.shape}")
    return x @ weights + bias


def linear_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    if grad_out.shape != (x.shape[0], weights.shape[1]):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != linear output shape {(x.shape[0], weights.shape[1])}"
        )
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(as_tensor(x), 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # gradient at exactly 0 is 0
    return np.where(x > 0, grad_out, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: Sequence[int]) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits shape {logits.shape} vs labels shape {labels.shape}")
    n, c = logits.shape
    if n and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got {labels.tolist()}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


# ---------------------------------------------------------------------------
# dropout


@dataclass
class DropoutState:
    """Inverted dropout configuration.

    In train mode the keep-mask comes from ``mask`` when given, otherwise it is
    drawn from a Philox stream keyed by ``(seed, layer_id, iteration)``.
    """

    ratio: float
    mode: str = "train"
    seed: int = 0
    layer_id: int = 0
    iteration: int = 0
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"dropout ratio must be in [0, 1), got {self.ratio}")
        if self.mode not in ("train", "inference"):
            raise ValueError(f"dropout mode must be 'train' or 'inference', got {self.mode!r}")


def keyed_generator(*key: int) -> np.random.Generator:
    """Counter-based generator for an arbitrary tuple of non-negative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def dropout_mask(shape, ratio: float, *key: int) -> np.ndarray:
    u = keyed_generator(*key).random(shape)
    return (u >= ratio).astype(DTYPE)


def dropout_apply(x: np.ndarray, state: DropoutState) -> np.ndarray:
    if not 0.0 <= state.ratio < 1.0:
        raise ValueError(f"dropout ratio must be in [0, 1), got {state.ratio}")
    if state.mode == "inference" or state.ratio == 0.0:
        return x
    mask = state.mask
    if mask is None:
        mask = dropout_mask(x.shape, state.ratio, state.seed, state.layer_id, state.iteration)
    elif mask.shape != x.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} != input shape {x.shape}")
    return x * mask / (1.0 - state.ratio)


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray, ratio: float) -> np.ndarray:
    return grad_out * mask / (1.0 - ratio)


# ---------------------------------------------------------------------------
# optimizer


def sgd_step(
    params: np.ndarray,
    grads: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
    velocity: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """SGD with momentum: ``v <- m*v - lr*(g + wd*p)``; ``p <- p + v``."""
    if not (params.shape == grads.shape == velocity.shape):
        raise ShapeError(
            f"sgd shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"velocity {velocity.shape}"
        )
    v = momentum * velocity - lr * (grads + weight_decay * params)
    return params + v, v


# ---------------------------------------------------------------------------
# gradient oracle


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``, one coordinate at a time."""
    x = as_tensor(x).copy()
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / max(||a||, ||b||)``; 0 when both are zero."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)
