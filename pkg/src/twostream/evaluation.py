"""Test-time protocol: 25 sampled positions, 10 crops each, averaged scores, weighted fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import flow
from .augment import CanvasSpec, CropSpec, POSITIONS, apply_crop, flip_input
from .inputs import CROP_KIND, canvas_at, normalize, num_positions, quantized_planes

log = logging.getLogger(__name__)

NUM_SAMPLED = 25
TEN_CROP_ORDER = tuple((p, False) for p in POSITIONS) + tuple((p, True) for p in POSITIONS)


@dataclass(frozen=True)
class FusionWeights:
    w_spatial: float = 1.0
    w_temporal: float = 2.0

    def __post_init__(self):
        if self.w_spatial < 0 or self.w_temporal < 0:
            raise ValueError("fusion weights must be non-negative")
        if self.w_spatial == 0 and self.w_temporal == 0:
            raise ValueError("fusion weights cannot both be zero")


def sample_frames(total: int, n: int = NUM_SAMPLED) -> list[int]:
    """``floor(k * total / n)`` for k in 0..n-1."""
    if total < 1:
        raise ValueError(f"need at least one frame, got {total}")
    if n < 1:
        raise ValueError(f"sample count must be positive, got {n}")
    return [k * total // n for k in range(n)]


def ten_crop(image: np.ndarray, canvas: CanvasSpec, kind: str = "rgb") -> list[np.ndarray]:
    """Four corners and the center at out_size, then the same five flipped."""
    if image.ndim != 3 or image.shape[1:] != (canvas.height, canvas.width):
        raise ValueError(f"image shape {image.shape} does not match canvas {canvas.height}x{canvas.width}")
    s = canvas.out_size
    base = [apply_crop(image, CropSpec(s, s, pos, False), canvas, kind) for pos in POSITIONS]
    return base + [flip_input(x, kind) for x in base]


def stream_positions(stream: str, num_frames: int, n: int = NUM_SAMPLED) -> list[int]:
    """Sampled frame indices (spatial) or 10-field window starts (temporal)."""
    if stream == "spatial":
        return sample_frames(num_frames, n)
    if num_frames < flow.STACK_LENGTH:
        raise ValueError(f"temporal scoring needs >= {flow.STACK_LENGTH} flow fields, got {num_frames}")
    last = num_positions("temporal", num_frames) - 1
    return [min(t, last) for t in sample_frames(num_frames, n)]


def video_crops(stream: str, frames: np.ndarray, canvas: CanvasSpec, bound: float, n: int = NUM_SAMPLED) -> np.ndarray:
    """All n x 10 normalized crops of one video, position-major."""
    kind = CROP_KIND[stream]
    crops = []
    for pos in stream_positions(stream, len(frames), n):
        crops.extend(ten_crop(canvas_at(stream, frames, pos, bound), canvas, kind))
    return normalize(np.stack(crops), stream, bound)


def video_score(
    model, stream: str, frames: np.ndarray, canvas: CanvasSpec, bound: float = flow.DEFAULT_BOUND,
    n: int = NUM_SAMPLED, space: str = "softmax",
) -> np.ndarray:
    """Mean per-crop score over n positions x 10 crops; ``frames`` as in :func:`video_crops`."""
    if len(frames) < 1:
        raise ValueError("video has no frames")
    crops = video_crops(stream, frames, canvas, bound, n)
    return model.predict_scores(crops, space).mean(axis=0)


def fuse(s: Sequence[float], t: Sequence[float], w: FusionWeights = FusionWeights()) -> np.ndarray:
    s, t = np.asarray(s, dtype=np.float64), np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"score length mismatch: {s.shape} vs {t.shape}")
    return w.w_spatial * s + w.w_temporal * t


def predict(scores: np.ndarray) -> int:
    return int(np.argmax(scores))  # lowest index wins ties


@dataclass
class VideoResult:
    key: str
    label: int
    spatial: np.ndarray
    temporal: np.ndarray
    fused: np.ndarray

    def to_json(self) -> dict:
        return {
            "video": self.key,
            "label": self.label,
            "spatial_pred": predict(self.spatial),
            "temporal_pred": predict(self.temporal),
            "fused_pred": predict(self.fused),
        }


@dataclass
class EvalReport:
    results: list[VideoResult]
    failures: int

    def _acc(self, attr: str) -> float:
        if not self.results:
            return 0.0
        hits = sum(predict(getattr(r, attr)) == r.label for r in self.results)
        return hits / len(self.results)

    @property
    def spatial_acc(self) -> float:
        return self._acc("spatial")

    @property
    def temporal_acc(self) -> float:
        return self._acc("temporal")

    @property
    def fused_acc(self) -> float:
        return self._acc("fused")

    def summary(self) -> dict:
        return {
            "spatial_acc": self.spatial_acc,
            "temporal_acc": self.temporal_acc,
            "fused_acc": self.fused_acc,
            "videos": len(self.results),
            "failures": self.failures,
        }


@dataclass
class EvalItem:
    """One video as seen by both streams. Loaders may raise; that counts as a failure."""

    key: str
    label: int
    load_rgb: Callable[[], np.ndarray]
    load_flow: Callable[[], np.ndarray]


def evaluate(
    spatial_model, temporal_model, items: Iterable[EvalItem], canvas: CanvasSpec,
    bound: float = flow.DEFAULT_BOUND, weights: FusionWeights = FusionWeights(),
    space: str = "softmax", n: int = NUM_SAMPLED, on_result: Callable[[VideoResult], None] | None = None,
) -> EvalReport:
    items = list(items)
    if not items:
        raise ValueError("empty manifest: nothing to evaluate")
    results, failures = [], 0
    for item in items:
        try:
            rgb = item.load_rgb()
            planes = quantized_planes(item.load_flow(), bound)
            s = video_score(spatial_model, "spatial", rgb, canvas, bound, n, space)
            t = video_score(temporal_model, "temporal", planes, canvas, bound, n, space)
        except (OSError, ValueError) as exc:
            log.warning("evaluation failed for %s: %s", item.key, exc)
            failures += 1
            continue
        res = VideoResult(item.key, item.label, s, t, fuse(s, t, weights))
        results.append(res)
        if on_result:
            on_result(res)
    return EvalReport(results, failures)
