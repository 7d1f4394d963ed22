"""Asynchronous ("wild") SDCA epoch: threads share the global shared vector without locks."""
from __future__ import annotations

from concurrent.futures import Executor
from typing import List, Optional, Sequence

import numpy as np

from dualkoord.engines.kernels import SweepContext
from dualkoord.partition import BucketPlan, make_rng, shuffle, static_partition
from dualkoord.topology import pin_current_thread, thread_cpu_sets


def epoch_wild(ctx: SweepContext, model, plan: BucketPlan, rng: np.random.Generator, threads: int,
               executor: Optional[Executor] = None, shuffle_order: bool = True, collect_trace: bool = False,
               cpu_sets: Optional[Sequence[Sequence[int]]] = None) -> Optional[List[np.ndarray]]:
    """Split the shuffled bucket order statically over `threads`; every thread reads and adds into
    the global w with no synchronization and owns the alpha coordinates of its buckets."""
    if shuffle_order:
        shuffle(plan.order, rng)
    slices = [plan.order[lo:hi] for lo, hi in static_partition(plan.num_buckets, threads)]
    traces = [np.empty(ctx.examples_in(s) if collect_trace else 0, dtype=np.int64) for s in slices]

    def work(t: int) -> int:
        if cpu_sets:
            pin_current_thread(cpu_sets[t])
        return ctx.sweep(model.alpha, model.w, slices[t], trace=traces[t])

    if executor is None or threads == 1:
        for t in range(threads):
            work(t)
    else:
        for future in [executor.submit(work, t) for t in range(threads)]:
            future.result()
    return traces if collect_trace else None


class WildRunner:
    def __init__(self, ctx: SweepContext, model, cfg, thread_plan, topo, executor=None):
        self.ctx = ctx
        self.model = model
        self.shuffle = cfg.shuffle
        self.threads = thread_plan.total_threads
        self.executor = executor
        self.plan = BucketPlan(ctx.n, ctx.bucket_size)
        self.rng = make_rng(cfg.seed)
        self.cpu_sets = thread_cpu_sets(thread_plan, topo, cfg.pin_threads)

    def run_epoch(self, collect_trace: bool = False) -> Optional[List[np.ndarray]]:
        return epoch_wild(self.ctx, self.model, self.plan, self.rng, self.threads, self.executor,
                          self.shuffle, collect_trace, self.cpu_sets)
