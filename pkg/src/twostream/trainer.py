"""Single-process and simulated data-parallel SGD training."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .augment import CanvasSpec
from .comm import SyncPolicy, comm_volume
from .flow import DEFAULT_BOUND
from .inputs import quantized_planes, training_sample
from .models import ModelConfig, ToyNet
from .schedule import StepSchedule, lr_at

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Learner:
    """A network plus its optimizer state. Owned exclusively by one training loop."""

    net: ToyNet
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict[str, np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.velocity is None:
            self.velocity = {k: np.zeros_like(v) for k, v in self.net.params.items()}

    def apply(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            self.net.params[name], self.velocity[name] = T.sgd_step(
                self.net.params[name], g, lr, self.momentum, self.weight_decay, self.velocity[name]
            )

    def copy(self) -> "Learner":
        return Learner(
            self.net.copy(), self.momentum, self.weight_decay,
            {k: v.copy() for k, v in self.velocity.items()},
        )


@dataclass
class WorkerShard:
    worker_id: int
    inputs: np.ndarray
    labels: np.ndarray
    offset: int = 0  # index of the shard's first sample in the global batch


@dataclass
class TrainRecord:
    iteration: int
    loss: float
    lr: float
    synced_bytes: float
    elapsed_ms: float | None = None

    def to_json(self) -> dict:
        return {
            "iter": self.iteration,
            "loss": self.loss,
            "lr": self.lr,
            "synced_bytes": self.synced_bytes,
            "elapsed_ms": self.elapsed_ms,
        }


def _check_loss(loss: float, iteration: int) -> None:
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss} at iteration {iteration}")


def shard_gradients(net: ToyNet, shard: WorkerShard, seed: int, iteration: int):
    """Mean loss and parameter gradients of one worker's shard."""
    logits, caches = net.forward(shard.inputs, "train", seed, iteration, shard.offset)
    loss, g = T.softmax_cross_entropy(logits, shard.labels)
    _, grads = net.backward(caches, g)
    return loss, grads


def train_step(learner: Learner, inputs, labels, lr: float, seed: int, iteration: int) -> float:
    """One SGD step on a whole batch; updates ``learner`` in place and returns the loss."""
    if len(labels) == 0:
        raise ValueError("empty batch")
    loss, grads = shard_gradients(learner.net, WorkerShard(0, T.as_tensor(inputs), np.asarray(labels)), seed, iteration)
    _check_loss(loss, iteration)
    learner.apply(grads, lr)
    return loss


def make_shards(inputs, labels, k: int) -> list[WorkerShard]:
    """Split a global batch into k equal, ordered shards."""
    n = len(labels)
    if k < 1 or n % k:
        raise ValueError(f"batch of {n} cannot be split into {k} equal shards")
    size = n // k
    return [
        WorkerShard(w, T.as_tensor(inputs[w * size : (w + 1) * size]), np.asarray(labels[w * size : (w + 1) * size]), w * size)
        for w in range(k)
    ]


def _run(tasks: Sequence[Callable], order: Sequence[int] | None, executor):
    """Run per-worker tasks in any execution order; results come back indexed by worker."""
    order = list(order) if order is not None else list(range(len(tasks)))
    if executor is not None:
        futures = {i: executor.submit(tasks[i]) for i in order}
        return [futures[i].result() for i in range(len(tasks))]
    results = [None] * len(tasks)
    for i in order:
        results[i] = tasks[i]()
    return results


def _reduce(per_worker: list[dict[str, np.ndarray]], weights: list[float]) -> dict[str, np.ndarray]:
    # fixed ascending worker_id accumulation, independent of completion order
    out = {}
    for name in per_worker[0]:
        acc = weights[0] * per_worker[0][name]
        for w, grads in zip(weights[1:], per_worker[1:]):
            acc = acc + w * grads[name]
        out[name] = acc
    return out


def data_parallel_step(
    learner: Learner,
    shards: Sequence[WorkerShard],
    lr: float,
    policy: SyncPolicy,
    seed: int = 0,
    iteration: int = 0,
    executor: ThreadPoolExecutor | None = None,
    order: Iterable[int] | None = None,
) -> tuple[float, float]:
    """Synchronous data-parallel SGD step over K simulated workers.

    Returns ``(loss, synced_bytes)`` and updates ``learner`` in place. Both sync
    modes perform the same arithmetic in the same order; they differ in which
    tensors are modeled as crossing the wire.
    """
    shards = sorted(shards, key=lambda s: s.worker_id)
    if not shards:
        raise ValueError("no shards")
    sizes = {len(s.labels) for s in shards}
    if len(sizes) != 1:
        raise ValueError(f"unequal shard sizes {sorted(sizes)}")
    if [s.worker_id for s in shards] != list(range(len(shards))):
        raise ValueError("worker ids must be 0..K-1")
    net = learner.net
    k = len(shards)
    total = sum(len(s.labels) for s in shards)
    weights = [len(s.labels) / total for s in shards]

    if policy.mode == "full_param_sync":
        tasks = [lambda s=s: shard_gradients(net, s, seed, iteration) for s in shards]
        results = _run(tasks, order, executor)
        losses = [r[0] for r in results]
        grads = _reduce([r[1] for r in results], weights)
    else:
        fc = net.fc_start
        n_layers = len(net.layout)
        # workers: conv trunk forward
        tasks = [
            lambda s=s: net.forward_range(s.inputs, 0, fc, "train", seed, iteration, s.offset)
            for s in shards
        ]
        trunk = _run(tasks, order, executor)
        # fc worker: consume gathered activations shard by shard in worker order
        losses, fc_grads, act_grads = [], [], []
        for s, (feats, _) in zip(shards, trunk):
            logits, caches = net.forward_range(feats, fc, n_layers, "train", seed, iteration, s.offset)
            loss, g = T.softmax_cross_entropy(logits, s.labels)
            g_feats, grads = net.backward_range(caches, g, fc, n_layers)
            losses.append(loss)
            fc_grads.append(grads)
            act_grads.append(g_feats)
        # workers: conv trunk backward with the scattered activation gradients
        tasks = [
            lambda i=i: net.backward_range(trunk[i][1], act_grads[i], 0, fc)[1] for i in range(k)
        ]
        conv_grads = _run(tasks, order, executor)
        merged = [{**c, **f} for c, f in zip(conv_grads, fc_grads)]
        grads = _reduce([{n: m[n] for n in net.params if n in m} for m in merged], weights)

    loss = float(sum(w * l for w, l in zip(weights, losses)))
    _check_loss(loss, iteration)
    learner.apply(grads, lr)
    fc_dim = net.shapes[net.fc_start - 1][0] if net.fc_start else 0
    synced = comm_volume(net.layout, k, policy, total // k, fc_dim)
    return loss, synced


# ---------------------------------------------------------------------------
# full runs


@dataclass
class TrainConfig:
    model: ModelConfig
    schedule: StepSchedule
    batch: int = 32
    workers: int = 1
    policy: SyncPolicy = field(default_factory=SyncPolicy)
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    canvas: CanvasSpec = field(default_factory=CanvasSpec)
    flow_bound: float = DEFAULT_BOUND
    augment_flow: bool = True
    wall_clock: bool = False
    threaded: bool = False

    def __post_init__(self):
        if self.batch < 1 or self.workers < 1 or self.batch % self.workers:
            raise ValueError(f"batch {self.batch} must split evenly over {self.workers} workers")
        if self.canvas.out_size != self.model.input_size:
            raise ValueError(
                f"crop out_size {self.canvas.out_size} != model input_size {self.model.input_size}"
            )


class BatchSampler:
    """Cycles through videos in seeded epoch permutations."""

    def __init__(self, n: int, seed: int):
        if n < 1:
            raise ValueError("dataset is empty")
        self.n, self.seed = n, seed
        self.epoch, self.pos = 0, 0
        self.order = self._perm()

    def _perm(self) -> np.ndarray:
        return T.keyed_generator(self.seed, 7, self.epoch).permutation(self.n)

    def take(self, count: int) -> list[int]:
        out = []
        while len(out) < count:
            if self.pos == self.n:
                self.epoch += 1
                self.pos = 0
                self.order = self._perm()
            out.append(int(self.order[self.pos]))
            self.pos += 1
        return out


def stream_frames(videos, stream: str, bound: float) -> list[np.ndarray]:
    """Per-video uint8 arrays the stream samples from (RGB or quantized flow)."""
    if stream == "spatial":
        return [np.asarray(v.frames) for v in videos]
    return [quantized_planes(v.frames, bound) for v in videos]


def run_training(
    config: TrainConfig,
    videos,
    on_record: Callable[[TrainRecord], None] | None = None,
    learner: Learner | None = None,
) -> tuple[list[TrainRecord], Learner]:
    """Train until the schedule's stop iteration, one record per step."""
    stream = config.model.stream
    learner = learner or Learner(ToyNet(config.model), config.momentum, config.weight_decay)
    records: list[TrainRecord] = []
    if config.schedule.stop_iter == 0:
        return records, learner
    frames = stream_frames(videos, stream, config.flow_bound)
    labels = [v.label for v in videos]
    augment = stream == "spatial" or config.augment_flow
    sampler = BatchSampler(len(frames), config.seed)
    executor = ThreadPoolExecutor(config.workers) if config.threaded and config.workers > 1 else None
    start = time.perf_counter()
    try:
        for it in range(config.schedule.stop_iter):
            lr = lr_at(config.schedule, it)
            idx = sampler.take(config.batch)
            xs = np.stack([
                training_sample(stream, frames[v], T.keyed_generator(config.seed, 11, it, j),
                                config.canvas, config.flow_bound, augment)
                for j, v in enumerate(idx)
            ])
            ys = np.array([labels[v] for v in idx])
            shards = make_shards(xs, ys, config.workers)
            loss, synced = data_parallel_step(
                learner, shards, lr, config.policy, config.seed, it, executor
            )
            elapsed = round((time.perf_counter() - start) * 1e3, 3) if config.wall_clock else None
            rec = TrainRecord(it, loss, lr, synced, elapsed)
            records.append(rec)
            if on_record:
                on_record(rec)
            if it % 500 == 0:
                log.debug("iter %d loss %.4f lr %g", it, loss, lr)
    finally:
        if executor:
            executor.shutdown()
    return records, learner
