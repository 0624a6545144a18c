"""Step learning-rate schedules for the two streams."""

from __future__ import annotations

import math
from dataclasses import dataclass


class TrainingComplete(Exception):
    """Raised by :func:`lr_at` once the schedule's stop iteration is reached."""


@dataclass(frozen=True)
class StepSchedule:
    base_lr: float
    decay_factor: float
    step_iters: int
    stop_iter: int

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 < self.decay_factor < 1:
            raise ValueError(f"decay_factor must be in (0, 1), got {self.decay_factor}")
        if self.step_iters < 1:
            raise ValueError(f"step_iters must be positive, got {self.step_iters}")
        if self.stop_iter < 0:
            raise ValueError(f"stop_iter must be non-negative, got {self.stop_iter}")

    @property
    def num_rates(self) -> int:
        return math.ceil(self.stop_iter / self.step_iters)


PRESETS = {
    "temporal": StepSchedule(0.005, 0.1, 10_000, 30_000),
    "spatial": StepSchedule(0.001, 0.1, 4_000, 10_000),
}


def preset(stream: str) -> StepSchedule:
    try:
        return PRESETS[stream]
    except KeyError:
        raise ValueError(f"unknown stream {stream!r}; expected 'spatial' or 'temporal'") from None


def lr_at(s: StepSchedule, iteration: int) -> float:
    """Rate for ``iteration``; the decay is already in effect at each multiple of step_iters."""
    if iteration < 0:
        raise ValueError(f"iteration must be non-negative, got {iteration}")
    if iteration >= s.stop_iter:
        raise TrainingComplete(f"iteration {iteration} >= stop_iter {s.stop_iter}")
    return s.base_lr * s.decay_factor ** (iteration // s.step_iters)
