"""Flat ``key=value`` run configuration shared by every CLI command."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Any

from .augment import CanvasSpec
from .comm import SyncPolicy
from .evaluation import FusionWeights
from .models import STREAM_DROPOUT, ModelConfig
from .schedule import StepSchedule, preset
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass
class RunConfig:
    stream: str = "spatial"
    num_classes: int = 101
    seed: int = 0
    batch: int = 32
    workers: int = 1
    sync_mode: str = "full_param_sync"
    base_lr: float | None = None  # unset lr keys fall back to the stream preset
    lr_step: int | None = None
    lr_stop: int | None = None
    lr_decay: float | None = None
    momentum: float = 0.9
    weight_decay: float = 0.0
    dropout1: float | None = None
    dropout2: float | None = None
    hidden: int = 256
    flow_bound: float = 20.0
    canvas_w: int = 340
    canvas_h: int = 256
    scale_set: tuple[int, ...] = (256, 224, 192, 168)
    out_size: int = 224
    augment_flow: bool = True
    w_spatial: float = 1.0
    w_temporal: float = 2.0
    score_space: str = "softmax"
    layout: str = "vgg16"
    batch_per_worker: int = 32
    wall_clock: bool = False

    # ------------------------------------------------------------------
    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def parse_value(cls, key: str, text: str) -> Any:
        kind = {f.name: f.type for f in fields(cls)}[key]
        if "tuple" in kind:
            return _ints(text)
        if "bool" in kind:
            return _bool(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
        return text.strip()

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "RunConfig":
        values = {}
        for key, text in items.items():
            if key not in cls.keys():
                raise ConfigError(f"unknown config key {key!r}")
            try:
                values[key] = cls.parse_value(key, text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike | None, overrides: dict[str, str] | None = None) -> "RunConfig":
        """Read a config file (optional) and apply flag overrides on top."""
        items = read_items(path) if path else {}
        items.update(overrides or {})
        return cls.from_items(items)

    def dump(self) -> str:
        lines = []
        for key in self.keys():
            v = getattr(self, key)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(map(str, v))
            elif isinstance(v, bool):
                v = int(v)
            lines.append(f"{key}={v}")
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------
    def schedule(self) -> StepSchedule:
        base = preset(self.stream)
        return StepSchedule(
            self.base_lr if self.base_lr is not None else base.base_lr,
            self.lr_decay if self.lr_decay is not None else base.decay_factor,
            self.lr_step if self.lr_step is not None else base.step_iters,
            self.lr_stop if self.lr_stop is not None else base.stop_iter,
        )

    def dropout(self) -> tuple[float, float]:
        d1, d2 = STREAM_DROPOUT[self.stream]
        return (
            self.dropout1 if self.dropout1 is not None else d1,
            self.dropout2 if self.dropout2 is not None else d2,
        )

    def canvas(self) -> CanvasSpec:
        return CanvasSpec(self.canvas_w, self.canvas_h, self.scale_set, self.out_size)

    def model(self) -> ModelConfig:
        return ModelConfig(
            self.stream, self.num_classes, self.out_size, self.hidden, self.dropout(), self.seed
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            model=self.model(),
            schedule=self.schedule(),
            batch=self.batch,
            workers=self.workers,
            policy=SyncPolicy(self.sync_mode),
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            seed=self.seed,
            canvas=self.canvas(),
            flow_bound=self.flow_bound,
            augment_flow=self.augment_flow,
            wall_clock=self.wall_clock,
        )

    def fusion(self) -> FusionWeights:
        return FusionWeights(self.w_spatial, self.w_temporal)

    def validate(self) -> None:
        """Build every derived object once so invalid values fail before any work."""
        if self.stream not in STREAM_DROPOUT:
            raise ConfigError(f"stream must be spatial or temporal, got {self.stream!r}")
        if self.score_space not in ("softmax", "logit"):
            raise ConfigError(f"score_space must be softmax or logit, got {self.score_space!r}")
        if self.layout not in ("vgg16", "toy"):
            raise ConfigError(f"layout must be vgg16 or toy, got {self.layout!r}")
        if self.flow_bound <= 0:
            raise ConfigError(f"flow_bound must be positive, got {self.flow_bound}")
        if self.batch_per_worker < 1:
            raise ConfigError("batch_per_worker must be positive")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigError("momentum must be in [0, 1) and weight_decay non-negative")
        try:
            self.train_config()
            self.fusion()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def read_items(path: str | os.PathLike) -> dict[str, str]:
    items = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in items:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            items[key] = value
    return items
