"""Single-threaded SDCA epoch."""
from __future__ import annotations

from typing import List, Optional

import numpy as np

from dualkoord.engines.kernels import SweepContext
from dualkoord.partition import BucketPlan, make_rng, shuffle


def epoch_sequential(ctx: SweepContext, model, plan: BucketPlan, rng: np.random.Generator,
                     shuffle_order: bool = True, collect_trace: bool = False) -> Optional[List[np.ndarray]]:
    """Shuffle the buckets, then update every coordinate once against the global model."""
    if shuffle_order:
        shuffle(plan.order, rng)
    trace = np.empty(ctx.n, dtype=np.int64) if collect_trace else np.zeros(0, dtype=np.int64)
    pos = ctx.sweep(model.alpha, model.w, plan.order, trace=trace)
    return [trace[:pos]] if collect_trace else None


class SequentialRunner:
    def __init__(self, ctx: SweepContext, model, cfg, thread_plan, topo, executor=None):
        self.ctx = ctx
        self.model = model
        self.shuffle = cfg.shuffle
        self.plan = BucketPlan(ctx.n, ctx.bucket_size)
        self.rng = make_rng(cfg.seed)

    def run_epoch(self, collect_trace: bool = False) -> Optional[List[np.ndarray]]:
        return epoch_sequential(self.ctx, self.model, self.plan, self.rng, self.shuffle, collect_trace)
