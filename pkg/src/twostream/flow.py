"""Optical-flow quantization to 8 bits and 10-frame stacking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

STACK_LENGTH = 10
DEFAULT_BOUND = 20.0


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError(f"u and v must be matching H x W planes, got {self.u.shape} / {self.v.shape}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FlowField":
        """Build from a 2 x H x W array (u plane first)."""
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"flow array must be 2 x H x W, got {arr.shape}")
        return cls(arr[0], arr[1])

    def to_array(self) -> np.ndarray:
        return np.stack([self.u, self.v])


@dataclass
class FlowStack:
    data: np.ndarray  # uint8, 20 x H x W, channels [u_t, v_t, u_t+1, v_t+1, ...]
    bound: float
    frame_span: int


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(values: np.ndarray, bound: float = DEFAULT_BOUND) -> np.ndarray:
    """Map displacements in [-bound, bound] linearly onto uint8 [0, 255]."""
    if not bound > 0:
        raise ValueError(f"flow bound must be positive, got {bound}")
    scaled = (np.asarray(values, dtype=np.float64) + bound) * (255.0 / (2.0 * bound))
    return np.clip(_round_half_away(scaled), 0, 255).astype(np.uint8)


def quantize_flow(f: FlowField, bound: float = DEFAULT_BOUND) -> tuple[np.ndarray, np.ndarray]:
    return quantize(f.u, bound), quantize(f.v, bound)


def dequantize(q: np.ndarray, bound: float = DEFAULT_BOUND) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * (2.0 * bound / 255.0) - bound


def dequantize_flow(qu: np.ndarray, qv: np.ndarray, bound: float = DEFAULT_BOUND) -> FlowField:
    return FlowField(dequantize(qu, bound), dequantize(qv, bound))


def interleave(planes: Sequence[np.ndarray], t: int = 0, bound: float = DEFAULT_BOUND) -> FlowStack:
    """Stack 10 already-quantized 2 x H x W planes into a 20-channel block."""
    if len(planes) != STACK_LENGTH:
        raise ValueError(f"a flow stack needs exactly {STACK_LENGTH} fields, got {len(planes)}")
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise ValueError(f"flow fields differ in shape: {sorted(shapes)}")
    return FlowStack(np.concatenate(list(planes), axis=0).astype(np.uint8), bound, t)


def build_stack(fields: Sequence[FlowField], bound: float = DEFAULT_BOUND, t: int = 0) -> FlowStack:
    if len(fields) != STACK_LENGTH:
        raise ValueError(f"a flow stack needs exactly {STACK_LENGTH} fields, got {len(fields)}")
    shapes = {f.u.shape for f in fields}
    if len(shapes) != 1:
        raise ValueError(f"flow fields differ in shape: {sorted(shapes)}")
    planes = [np.stack(quantize_flow(f, bound)) for f in fields]
    return interleave(planes, t, bound)
