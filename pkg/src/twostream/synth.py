"""Synthetic "moving bar" videos standing in for a real action dataset.

Each video shows a lattice of textured, colored bars sliding across a static
noisy background with constant integer velocity (wrapping at the borders). The
bars' appearance carries the spatial signal, their velocity the temporal one.

Variants:

* ``joint``: every class has its own appearance and its own velocity.
* ``complementary``: the first half of the classes share one velocity and
  differ only in appearance; the second half share one appearance and differ
  only in velocity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tsr
from .data import ManifestRecord, frame_name, write_manifest
from .tensor import keyed_generator

VARIANTS = ("joint", "complementary")
# horizontal flips mirror dx, so motion classes are told apart by (|dx|, dy);
# each video draws the sign of dx at random
BASE_VELOCITIES = ((2, 0), (0, 2), (0, -2), (2, 2), (2, -2), (4, 0), (0, 4), (0, -4))
PALETTE = (
    (230, 40, 40), (40, 200, 60), (50, 80, 240), (230, 210, 40),
    (220, 60, 220), (40, 210, 220), (250, 140, 30), (240, 240, 240),
)
TEXTURES = ("solid", "hstripes", "vstripes", "checker")


@dataclass(frozen=True)
class ClassStyle:
    appearance: int
    velocity: tuple[int, int]


def _velocity_table(n: int) -> list[tuple[int, int]]:
    # the base set first, then rings of growing speed; every entry is a distinct (|dx|, dy)
    table = list(BASE_VELOCITIES)
    r = 1
    while len(table) < n:
        r += 1
        for dx in range(0, 2 * r + 1, 2):
            for dy in range(-2 * r, 2 * r + 1, 2):
                if max(dx, abs(dy)) == 2 * r and (dx, dy) not in table:
                    table.append((dx, dy))
    return table


def velocity(j: int) -> tuple[int, int]:
    return _velocity_table(j + 1)[j]


def class_styles(classes: int, variant: str = "joint") -> list[ClassStyle]:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if classes < 1:
        raise ValueError(f"need at least one class, got {classes}")
    if variant == "joint":
        return [ClassStyle(c, velocity(c)) for c in range(classes)]
    if classes < 4 or classes % 2:
        raise ValueError(f"the complementary variant needs an even class count >= 4, got {classes}")
    half = classes // 2
    return [ClassStyle(c, velocity(0)) for c in range(half)] + [
        ClassStyle(half, velocity(1 + j)) for j in range(half)
    ]


def block_colors(appearance: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """3 x h x w uint8 appearance sampled at block-local (row, col) coordinates."""
    color = np.array(PALETTE[appearance % len(PALETTE)], dtype=np.float64)
    texture = TEXTURES[(appearance // len(PALETTE)) % len(TEXTURES)]
    if texture == "solid":
        on = np.ones(rows.shape, bool)
    elif texture == "hstripes":
        on = rows % 2 == 0
    elif texture == "vstripes":
        on = cols % 2 == 0
    else:
        on = (rows + cols) % 2 == 0
    return np.where(on[None], color[:, None, None], 0.35 * color[:, None, None]).astype(np.uint8)


def render_video(
    style: ClassStyle, frames: int, width: int, height: int, rng: np.random.Generator,
    period: int = 8, block: int = 6,
) -> tuple[np.ndarray, np.ndarray]:
    """RGB frames (T x 3 x H x W uint8) and true flow (T-1 x 2 x H x W float64).

    The foreground is a lattice of ``block``-sized squares repeating every
    ``period`` pixels, so every crop sees some of it.
    """
    background = rng.integers(0, 40, size=(3, height, width)).astype(np.uint8)
    x0, y0 = int(rng.integers(period)), int(rng.integers(period))
    dx, dy = style.velocity
    if rng.integers(2):
        dx = -dx
    yy, xx = np.mgrid[0:height, 0:width]
    rgb = np.empty((frames, 3, height, width), dtype=np.uint8)
    flows = np.zeros((max(frames - 1, 0), 2, height, width))
    for t in range(frames):
        # block-local coordinates of each pixel after moving the lattice by t * velocity
        r = (yy - y0 - t * dy) % period
        c = (xx - x0 - t * dx) % period
        fg = (r < block) & (c < block)
        rgb[t] = np.where(fg[None], block_colors(style.appearance, r, c), background)
        if t < frames - 1:
            flows[t, 0][fg] = dx
            flows[t, 1][fg] = dy
    return rgb, flows


def synthesize(
    out_dir: str | os.PathLike, classes: int, videos_per_class: int, frames: int, seed: int,
    width: int = 32, height: int = 24, variant: str = "joint",
) -> tuple[Path, Path]:
    """Write the dataset; returns the (spatial, temporal) manifest paths."""
    if videos_per_class < 1 or frames < 2:
        raise ValueError("need videos_per_class >= 1 and frames >= 2")
    styles = class_styles(classes, variant)
    out = Path(out_dir)
    (out / "videos").mkdir(parents=True, exist_ok=True)
    rgb_records, flow_records = [], []
    for c, style in enumerate(styles):
        for j in range(videos_per_class):
            vid = c * videos_per_class + j
            rel = f"videos/v{vid:05d}"
            vdir = out / rel
            vdir.mkdir(exist_ok=True)
            rgb, flows = render_video(style, frames, width, height, keyed_generator(seed, vid))
            for t, img in enumerate(rgb):
                tsr.save(vdir / frame_name("rgb", t), img)
            for t, f in enumerate(flows):
                tsr.save(vdir / frame_name("flow", t), f)
            rgb_records.append(ManifestRecord(rel, c, frames, "rgb"))
            flow_records.append(ManifestRecord(rel, c, frames - 1, "flow"))
    spatial, temporal = out / "spatial.tsv", out / "temporal.tsv"
    write_manifest(spatial, rgb_records)
    write_manifest(temporal, flow_records)
    return spatial, temporal
