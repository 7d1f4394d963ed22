"""Replicated-shared-vector engines: statically partitioned and dynamic hierarchical.

Buckets are split across groups once at training start, proportionally to each group's thread
count. Inside a group every thread updates its own replica of the shared vector (a snapshot of the
global w taken at epoch start) and owns the alpha coordinates of the buckets it processes. Static
mode keeps each thread's buckets fixed for the whole run; dynamic mode reshuffles the group's
buckets every epoch and lets threads claim them from a shared cursor. At epoch end replicas are
reduced within each group, then across groups.

Replicas solve their coordinate steps against a local subproblem whose quadratic term is scaled
by sigma (by default gamma times the number of replicas), so that the added replica updates stay
a safe step; sigma = 1 gives plain additive replicas.
"""
from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from dualkoord.decorators import logger
from dualkoord.engines.kernels import SweepContext
from dualkoord.errors import ConfigError
from dualkoord.partition import WorkQueue, make_rng, shuffle, static_partition
from dualkoord.topology import pin_current_thread, thread_cpu_sets

STATIC = "static"
DYNAMIC = "dynamic"


@dataclass
class Replica:
    """Thread-local copy of the shared vector plus the coordinate updates applied this epoch."""

    w_start: np.ndarray
    w_local: np.ndarray
    owned: np.ndarray
    deltas: np.ndarray
    count: int = 0

    @classmethod
    def create(cls, w: np.ndarray, capacity: int) -> "Replica":
        return cls(w, w.copy(), np.empty(capacity, dtype=np.int64), np.empty(capacity, dtype=np.float64))

    @property
    def delta_w(self) -> np.ndarray:
        return self.w_local - self.w_start

    @property
    def owned_updates(self) -> List[Tuple[int, float]]:
        return [(int(j), float(d)) for j, d in zip(self.owned[:self.count], self.deltas[:self.count])]

    def begin(self, snapshot: np.ndarray) -> None:
        self.w_start = snapshot
        self.w_local[:] = snapshot
        self.count = 0

    def record(self, updates: Sequence[Tuple[int, float]]) -> None:
        for j, delta in updates:
            self.owned[self.count] = j
            self.deltas[self.count] = delta
            self.count += 1


def _assert_disjoint(replicas: Sequence[Replica]) -> None:
    owned = np.concatenate([r.owned[:r.count] for r in replicas]) if replicas else np.zeros(0, np.int64)
    assert np.unique(owned).size == owned.size, "a dual coordinate was updated by more than one replica"


def _combine(w: np.ndarray, replicas: Sequence[Replica], gamma: float, sigma: float = 1.0) -> None:
    if len(replicas) == 1 and gamma == 1.0 and sigma == 1.0:
        # one replica at full weight is the global vector updated directly
        w[:] = replicas[0].w_local
        return
    total = np.zeros_like(w)
    for r in replicas:
        total += r.w_local - r.w_start
    w += (gamma / sigma) * total


def reduce_replicas(w: np.ndarray, replicas: Sequence[Replica], gamma: float,
                    alpha: Optional[np.ndarray] = None, sigma: float = 1.0) -> None:
    """w <- w + gamma * sum_k delta_w_k and alpha_j <- alpha_j + gamma * delta for every owned update.

    Replicas that solved a subproblem scaled by `sigma` hold sigma * delta_w; the reduction divides
    it back out.

    `w` must hold the epoch-start vector the replicas were taken from. Replicas are reset to the
    new global vector afterwards.
    """
    if __debug__:
        _assert_disjoint(replicas)
    _combine(w, replicas, gamma, sigma)
    if alpha is not None:
        for r in replicas:
            idx = r.owned[:r.count]
            alpha[idx] = alpha[idx] + gamma * r.deltas[:r.count]
    for r in replicas:
        r.begin(w)


def merge_group(replicas: Sequence[Replica], gamma: float, sigma: float = 1.0) -> Replica:
    """Reduce a group's thread replicas into one group-level replica (deltas pre-scaled by gamma)."""
    if __debug__:
        _assert_disjoint(replicas)
    snapshot = replicas[0].w_start
    merged = snapshot.copy()
    _combine(merged, replicas, gamma, sigma)
    owned = np.concatenate([r.owned[:r.count] for r in replicas])
    deltas = np.concatenate([r.deltas[:r.count] for r in replicas]) * gamma
    return Replica(snapshot, merged, owned, deltas, int(owned.size))


@dataclass
class GroupWork:
    group_id: int
    buckets: np.ndarray
    thread_buckets: List[np.ndarray]
    rng: np.random.Generator
    thread_rngs: List[np.random.Generator]
    replicas: List[Replica] = field(default_factory=list)
    cpu_sets: List[Optional[List[int]]] = field(default_factory=list)


def build_layout(ctx: SweepContext, w: np.ndarray, thread_plan, mode: str, seed: int,
                 cpu_sets: Optional[List[List[int]]] = None) -> List[GroupWork]:
    """Assign buckets to groups (and, in static mode, to threads) once for the whole run."""
    num_buckets = -(-ctx.n // ctx.bucket_size)
    thread_ranges = static_partition(num_buckets, thread_plan.total_threads)
    groups: List[GroupWork] = []
    t = 0
    for g_index, (gid, count) in enumerate(thread_plan.assignments):
        ranges = thread_ranges[t:t + count]
        thread_buckets = [np.arange(lo, hi, dtype=np.int64) for lo, hi in ranges]
        buckets = np.arange(ranges[0][0], ranges[-1][1], dtype=np.int64)
        work = GroupWork(gid, buckets, thread_buckets, make_rng(seed, g_index),
                         [make_rng(seed, t + i) for i in range(count)])
        group_examples = ctx.examples_in(buckets)
        for i in range(count):
            capacity = group_examples if mode == DYNAMIC else ctx.examples_in(thread_buckets[i])
            work.replicas.append(Replica.create(w, capacity))
            work.cpu_sets.append(cpu_sets[t + i] if cpu_sets else None)
        groups.append(work)
        t += count
    return groups


def epoch_partitioned(ctx: SweepContext, model, layout: List[GroupWork], mode: str, gamma: float,
                      executor: Optional[Executor] = None, shuffle_order: bool = True, grain: int = 1,
                      collect_trace: bool = False, sigma: float = 1.0) -> Optional[List[np.ndarray]]:
    """One epoch of the two-level replica scheme; alpha and w are updated by the reduction only."""
    if mode not in (STATIC, DYNAMIC):
        raise ConfigError(f"unknown partitioning mode {mode!r}")
    snapshot = model.w.copy()
    queues = {}
    for group in layout:
        for r in group.replicas:
            r.begin(snapshot)
        if mode == DYNAMIC:
            if shuffle_order:
                shuffle(group.buckets, group.rng)
            queues[group.group_id] = WorkQueue(group.buckets, grain)
        elif shuffle_order:
            for order, rng in zip(group.thread_buckets, group.thread_rngs):
                shuffle(order, rng)

    def work(group: GroupWork, t: int) -> None:
        if group.cpu_sets[t]:
            pin_current_thread(group.cpu_sets[t])
        replica = group.replicas[t]
        if mode == STATIC:
            replica.count = ctx.sweep(model.alpha, replica.w_local, group.thread_buckets[t], write_alpha=False,
                                      trace=replica.owned, deltas=replica.deltas, sigma=sigma)
            return
        queue = queues[group.group_id]
        pos = 0
        while True:
            block = queue.claim_block()
            if block.size == 0:
                break
            pos = ctx.sweep(model.alpha, replica.w_local, block, write_alpha=False,
                            trace=replica.owned, deltas=replica.deltas, pos=pos, sigma=sigma)
        replica.count = pos

    jobs = [(group, t) for group in layout for t in range(len(group.replicas))]
    if executor is None or len(jobs) == 1:
        for group, t in jobs:
            work(group, t)
    else:
        for future in [executor.submit(work, group, t) for group, t in jobs]:
            future.result()

    traces = ([r.owned[:r.count].copy() for group in layout for r in group.replicas]
              if collect_trace else None)
    if len(layout) == 1:
        reduce_replicas(model.w, layout[0].replicas, gamma, model.alpha, sigma)
    else:
        merged = [merge_group(group.replicas, gamma, sigma) for group in layout]
        reduce_replicas(model.w, merged, gamma, model.alpha)
        for group in layout:
            for r in group.replicas:
                r.begin(model.w)
    return traces


class PartitionedRunner:
    def __init__(self, ctx: SweepContext, model, cfg, thread_plan, topo, executor=None, mode: str = DYNAMIC):
        self.ctx = ctx
        self.model = model
        self.mode = mode
        self.gamma = cfg.gamma
        self.sigma = cfg.resolve_sigma(thread_plan.total_threads)
        self.grain = cfg.claim_grain
        self.shuffle = cfg.shuffle
        self.executor = executor
        self.layout = build_layout(ctx, model.w, thread_plan, mode, cfg.seed,
                                   thread_cpu_sets(thread_plan, topo, cfg.pin_threads))
        logger.debug(f"{mode} layout (sigma={self.sigma:g}): " + ", ".join(
            f"group {g.group_id}: {g.buckets.size} buckets / {len(g.replicas)} threads" for g in self.layout))

    def run_epoch(self, collect_trace: bool = False) -> Optional[List[np.ndarray]]:
        return epoch_partitioned(self.ctx, self.model, self.layout, self.mode, self.gamma, self.executor,
                                 self.shuffle, self.grain, collect_trace, self.sigma)
