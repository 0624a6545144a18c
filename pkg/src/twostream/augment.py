"""Corner/center cropping with multi-scale jitter, bilinear resize, flips."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

POSITIONS = ("top-left", "top-right", "bottom-left", "bottom-right", "center")


@dataclass(frozen=True)
class CanvasSpec:
    width: int = 340
    height: int = 256
    scale_set: tuple[int, ...] = (256, 224, 192, 168)
    out_size: int = 224

    def __post_init__(self):
        object.__setattr__(self, "scale_set", tuple(int(s) for s in self.scale_set))
        if not self.scale_set or min(self.scale_set) < 1:
            raise ValueError(f"scale_set must hold positive extents, got {self.scale_set}")
        if max(self.scale_set) > min(self.width, self.height):
            raise ValueError(
                f"largest crop {max(self.scale_set)} exceeds canvas {self.width}x{self.height}"
            )
        if self.out_size < 1:
            raise ValueError(f"out_size must be >= 1, got {self.out_size}")


@dataclass(frozen=True)
class CropSpec:
    crop_w: int
    crop_h: int
    position: str
    flip: bool = False

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ValueError(f"unknown crop position {self.position!r}")

    def to_line(self) -> str:
        return f"{self.crop_w},{self.crop_h},{self.position},{int(self.flip)}"

    @classmethod
    def from_line(cls, line: str) -> "CropSpec":
        w, h, pos, flip = line.strip().split(",")
        return cls(int(w), int(h), pos, flip == "1")


def corner_offsets(canvas_w: int, canvas_h: int, crop_w: int, crop_h: int) -> list[tuple[int, int]]:
    """(x, y) offsets in the order top-left, top-right, bottom-left, bottom-right, center."""
    if crop_w > canvas_w or crop_h > canvas_h or crop_w < 1 or crop_h < 1:
        raise ValueError(f"crop {crop_w}x{crop_h} does not fit canvas {canvas_w}x{canvas_h}")
    dx, dy = canvas_w - crop_w, canvas_h - crop_h
    return [(0, 0), (dx, 0), (0, dy), (dx, dy), (dx // 2, dy // 2)]


def crop_space(spec: CanvasSpec) -> list[CropSpec]:
    """Every CropSpec :func:`sample_crop` can produce."""
    return [
        CropSpec(w, h, pos, flip)
        for w, h, pos, flip in product(spec.scale_set, spec.scale_set, POSITIONS, (False, True))
    ]


def sample_crop(spec: CanvasSpec, rng_seed: int) -> CropSpec:
    rng = np.random.default_rng(rng_seed)
    return draw_crop(spec, rng)


def draw_crop(spec: CanvasSpec, rng: np.random.Generator) -> CropSpec:
    n = len(spec.scale_set)
    w, h, pos, flip = rng.integers([n, n, len(POSITIONS), 2])
    return CropSpec(spec.scale_set[w], spec.scale_set[h], POSITIONS[pos], bool(flip))


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, clamped at the border
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a C x H x W array; returns float64."""
    img = np.asarray(img, dtype=np.float64)
    _, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    rows = img[:, y0, :] * (1 - fy)[None, :, None] + img[:, y1, :] * fy[None, :, None]
    return rows[:, :, x0] * (1 - fx) + rows[:, :, x1] * fx


def flip_input(x: np.ndarray, kind: str = "rgb") -> np.ndarray:
    """Horizontal flip; flow stacks also mirror their u channels (q -> 255 - q)."""
    if kind not in ("rgb", "flow_stack"):
        raise ValueError(f"unknown input kind {kind!r}")
    out = np.ascontiguousarray(x[..., ::-1])
    if kind == "flow_stack":
        if out.shape[0] % 2:
            raise ValueError(f"flow stacks need an even channel count, got {out.shape[0]}")
        out[0::2] = 255 - out[0::2]
    return out


def apply_crop(image: np.ndarray, cs: CropSpec, spec: CanvasSpec, kind: str = "rgb") -> np.ndarray:
    """Cut the CropSpec window from a canvas image and resize it to out_size."""
    if image.ndim != 3 or image.shape[1:] != (spec.height, spec.width):
        raise ValueError(
            f"image shape {image.shape} does not match canvas {spec.height}x{spec.width}"
        )
    x, y = corner_offsets(spec.width, spec.height, cs.crop_w, cs.crop_h)[POSITIONS.index(cs.position)]
    window = image[:, y : y + cs.crop_h, x : x + cs.crop_w]
    out = resize_bilinear(window, spec.out_size, spec.out_size)
    return flip_input(out, kind) if cs.flip else out
