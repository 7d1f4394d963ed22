"""Buckets of consecutive examples, per-epoch shuffling and bucket-to-thread assignment.

A bucket is a run of consecutive example indices sized so that the dual coordinates it touches
fill one cache line. Buckets are the unit of shuffling; examples inside a bucket are always
visited in increasing index order.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, MutableSequence, Optional, Tuple, Union

import numpy as np
from numba import njit

from dualkoord.errors import ConfigError

ENTRY_BYTES = 8
# model-vector size above which buckets pay off when the LLC size is unknown
LLC_FALLBACK_ENTRIES = 500_000


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Reproducible generator (PCG64) for stream `stream` of master seed `seed`."""
    return np.random.Generator(np.random.PCG64(seed + stream))


def _is_power_of_two(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def compute_bucket_size(cache_line_bytes: int, entry_bytes: int = ENTRY_BYTES) -> int:
    """Number of model entries per cache line."""
    if not (_is_power_of_two(cache_line_bytes) and _is_power_of_two(entry_bytes)):
        raise ConfigError(f"cache line ({cache_line_bytes}) and entry size ({entry_bytes}) must be powers of two")
    if cache_line_bytes < entry_bytes or cache_line_bytes % entry_bytes:
        raise ConfigError(f"cache line of {cache_line_bytes}B does not hold whole {entry_bytes}B entries")
    return cache_line_bytes // entry_bytes


def buckets_enabled(n: int, llc_bytes: Optional[int], entry_bytes: int = ENTRY_BYTES) -> bool:
    """True when the n-entry model vector does not fit in the last-level cache."""
    if llc_bytes is None:
        return n > LLC_FALLBACK_ENTRIES
    return n * entry_bytes > llc_bytes


@dataclass
class BucketPlan:
    n: int
    bucket_size: int
    order: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n < 1 or self.bucket_size < 1:
            raise ConfigError(f"invalid bucket plan n={self.n}, bucket_size={self.bucket_size}")
        if self.order is None:
            self.order = np.arange(self.num_buckets, dtype=np.int64)

    @property
    def num_buckets(self) -> int:
        return -(-self.n // self.bucket_size)

    def bucket_range(self, b: int) -> range:
        start = b * self.bucket_size
        return range(start, min(start + self.bucket_size, self.n))


@njit(nogil=True, cache=True)
def _fisher_yates(order, uniforms):
    for i in range(order.shape[0] - 1, 0, -1):
        j = int(uniforms[i] * (i + 1))
        if j > i:
            j = i
        tmp = order[i]
        order[i] = order[j]
        order[j] = tmp


def shuffle(order: Union[np.ndarray, MutableSequence[int]], rng: np.random.Generator) -> None:
    """In-place Fisher-Yates permutation driven by one uniform draw per position."""
    uniforms = rng.random(len(order))
    if isinstance(order, np.ndarray):
        _fisher_yates(order, uniforms)
        return
    for i in range(len(order) - 1, 0, -1):
        j = min(int(uniforms[i] * (i + 1)), i)
        order[i], order[j] = order[j], order[i]


def static_partition(num_buckets: int, k: int) -> List[Tuple[int, int]]:
    """Split [0, num_buckets) into k contiguous [start, stop) ranges whose sizes differ by at most 1."""
    if k < 1:
        raise ConfigError(f"thread count must be >= 1, got {k}")
    base, extra = divmod(num_buckets, k)
    ranges = []
    start = 0
    for t in range(k):
        stop = start + base + (1 if t < extra else 0)
        ranges.append((start, stop))
        start = stop
    return ranges


class WorkQueue:
    """Shared claim cursor over an epoch's shuffled bucket order.

    The cursor is an ``itertools.count``; advancing it is a single atomic step under the GIL, so
    concurrent claims never hand out the same position and a stalled claimer blocks nobody.
    `claim_block` hands out `grain` consecutive positions per claim.
    """

    def __init__(self, order: np.ndarray, grain: int = 1):
        if grain < 1:
            raise ConfigError(f"claim grain must be >= 1, got {grain}")
        self.order = order
        self.grain = grain
        self._cursor = itertools.count(0, grain)

    @property
    def num_buckets(self) -> int:
        return len(self.order)

    def claim_next(self) -> Optional[int]:
        """Next bucket index, or None once the epoch's order is exhausted."""
        if self.grain != 1:
            raise ConfigError("claim_next requires a queue with grain 1; use claim_block")
        pos = next(self._cursor)
        if pos >= len(self.order):
            return None
        return int(self.order[pos])

    def claim_block(self) -> np.ndarray:
        """Up to `grain` bucket indices; empty once exhausted."""
        pos = next(self._cursor)
        return self.order[pos:pos + self.grain]
