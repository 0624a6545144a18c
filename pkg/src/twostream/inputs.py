"""Turning stored videos into network inputs for either stream."""

from __future__ import annotations

import numpy as np

from . import flow
from .augment import CanvasSpec, CropSpec, apply_crop, draw_crop

STREAM_KIND = {"spatial": "rgb", "temporal": "flow"}
CROP_KIND = {"spatial": "rgb", "temporal": "flow_stack"}


def normalize(x: np.ndarray, stream: str = "spatial", bound: float = flow.DEFAULT_BOUND) -> np.ndarray:
    """Network input from 8-bit values.

    RGB maps to [-1, 1]; quantized flow maps back to displacements in pixels
    (centered on the 127.5 midpoint so a flipped stack is exactly negated).
    """
    x = np.asarray(x, dtype=np.float64)
    if stream == "spatial":
        return (x - 127.5) / 127.5
    return (x - 127.5) * (2.0 * bound / 255.0)


def quantized_planes(flow_frames: np.ndarray, bound: float) -> np.ndarray:
    """T x 2 x H x W real flow -> T x 2 x H x W uint8."""
    return flow.quantize(flow_frames, bound)


def stack_at(planes: np.ndarray, t: int, bound: float) -> np.ndarray:
    if t < 0 or t + flow.STACK_LENGTH > len(planes):
        raise ValueError(
            f"flow stack at {t} needs fields {t}..{t + flow.STACK_LENGTH - 1}, video has {len(planes)}"
        )
    return flow.interleave(list(planes[t : t + flow.STACK_LENGTH]), t, bound).data


def num_positions(stream: str, num_frames: int) -> int:
    """Valid frame (spatial) or stack-start (temporal) positions."""
    if stream == "spatial":
        return num_frames
    return num_frames - flow.STACK_LENGTH + 1


def canvas_at(stream: str, frames: np.ndarray, pos: int, bound: float) -> np.ndarray:
    """Canvas-sized C x H x W uint8-valued input at one position."""
    if stream == "spatial":
        return frames[pos]
    return stack_at(frames, pos, bound)


def center_crop(canvas: CanvasSpec) -> CropSpec:
    return CropSpec(canvas.out_size, canvas.out_size, "center", False)


def training_sample(
    stream: str, frames: np.ndarray, rng: np.random.Generator, canvas: CanvasSpec,
    bound: float, augment: bool = True,
) -> np.ndarray:
    """One randomly positioned, randomly cropped, normalized training input.

    ``frames`` is uint8 RGB for the spatial stream, quantized flow planes for
    the temporal one.
    """
    n = num_positions(stream, len(frames))
    if n < 1:
        raise ValueError(f"video with {len(frames)} frames is too short for the {stream} stream")
    pos = int(rng.integers(n))
    cs = draw_crop(canvas, rng) if augment else center_crop(canvas)
    img = canvas_at(stream, frames, pos, bound)
    return normalize(apply_crop(img, cs, canvas, CROP_KIND[stream]), stream, bound)
