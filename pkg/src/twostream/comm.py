"""Analytic per-iteration communication volume for data-parallel training.

Two synchronization patterns are modeled:

* ``full_param_sync``: every parameter gradient is all-reduced.
* ``activation_gather``: only convolutional gradients are all-reduced; the
  fc-layer inputs of the K-1 remote workers are gathered onto the worker that
  runs the fc layers, and the matching activation gradients are scattered back.

Bytes are counted with 4-byte elements regardless of the compute precision.
"""

from __future__ import annotations

from dataclasses import dataclass

from .models import LayerLayout, conv_param_count, fc_param_count, param_count

BYTES_PER_ELEMENT = 4
SYNC_MODES = ("full_param_sync", "activation_gather")


def ring_allreduce_factor(k: int) -> float:
    return 2.0 * (k - 1) / k


COST_FACTORS = {"ring": ring_allreduce_factor}


@dataclass(frozen=True)
class SyncPolicy:
    mode: str = "full_param_sync"
    cost_factor: str = "ring"

    def __post_init__(self):
        if self.mode not in SYNC_MODES:
            raise ValueError(f"sync mode must be one of {SYNC_MODES}, got {self.mode!r}")
        if self.cost_factor not in COST_FACTORS:
            raise ValueError(f"unknown cost factor {self.cost_factor!r}")

    def allreduce_bytes(self, payload_bytes: float, k: int) -> float:
        if k < 1:
            raise ValueError(f"worker count must be >= 1, got {k}")
        return COST_FACTORS[self.cost_factor](k) * payload_bytes


@dataclass(frozen=True)
class CommBreakdown:
    param_sync_bytes: float
    activation_bytes: float
    fc_sync_bytes: float  # what full sync would spend on fc gradients alone

    @property
    def total(self) -> float:
        return self.param_sync_bytes + self.activation_bytes


def activation_traffic(k: int, batch_per_worker: int, fc_input_dim: int) -> int:
    """Gathered fc inputs plus scattered activation gradients, remote workers only."""
    return 2 * (k - 1) * batch_per_worker * fc_input_dim * BYTES_PER_ELEMENT


def comm_breakdown(
    layout: LayerLayout, k: int, policy: SyncPolicy, batch_per_worker: int, fc_input_dim: int
) -> CommBreakdown:
    _, total = param_count(layout)
    fc_sync = policy.allreduce_bytes(BYTES_PER_ELEMENT * fc_param_count(layout), k)
    if policy.mode == "full_param_sync":
        return CommBreakdown(policy.allreduce_bytes(BYTES_PER_ELEMENT * total, k), 0, fc_sync)
    conv_sync = policy.allreduce_bytes(BYTES_PER_ELEMENT * conv_param_count(layout), k)
    return CommBreakdown(conv_sync, activation_traffic(k, batch_per_worker, fc_input_dim), fc_sync)


def comm_volume(
    layout: LayerLayout, k: int, policy: SyncPolicy, batch_per_worker: int, fc_input_dim: int
) -> float:
    """Inter-worker bytes per iteration."""
    return comm_breakdown(layout, k, policy, batch_per_worker, fc_input_dim).total


def break_even_batch(layout: LayerLayout, k: int, fc_input_dim: int, policy: SyncPolicy | None = None) -> int:
    """Smallest per-worker batch at which gathering no longer beats full sync."""
    policy = policy or SyncPolicy("activation_gather")
    if k < 2:
        raise ValueError("break-even is undefined for a single worker")
    fc_sync = policy.allreduce_bytes(BYTES_PER_ELEMENT * fc_param_count(layout), k)
    per_sample = activation_traffic(k, 1, fc_input_dim)
    b = int(fc_sync // per_sample)
    while b * per_sample < fc_sync:
        b += 1
    return b
