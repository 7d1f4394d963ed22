"""Synthetic linear-model workloads: dense or uniformly sparse examples labelled by a random
ground-truth model plus Gaussian noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from dualkoord.data.dataset import Dataset
from dualkoord.decorators import time_and_memory
from dualkoord.errors import ConfigError

CLASSIFICATION = "classification"
REGRESSION = "regression"

# upper bound on the random draws held in memory per chunk of sparse examples
_CHUNK_VALUES = 1 << 22


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    sparsity: float = 1.0
    noise_sigma: float = 0.1
    task: str = CLASSIFICATION

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ConfigError(f"n and d must be >= 1, got n={self.n}, d={self.d}")
        if not 0.0 < self.sparsity <= 1.0:
            raise ConfigError(f"sparsity must lie in (0, 1], got {self.sparsity}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ConfigError(f"unknown task {self.task!r}")


def _sparse_examples(rng: np.random.Generator, n: int, d: int, sparsity: float) -> sp.csr_matrix:
    chunk = max(1, _CHUNK_VALUES // d)
    indptr = [np.zeros(1, dtype=np.int64)]
    cols, vals = [], []
    offset = 0
    for start in range(0, n, chunk):
        rows = min(chunk, n - start)
        mask = rng.random((rows, d)) < sparsity
        r, c = np.nonzero(mask)  # row-major, so indices increase within an example
        cols.append(c.astype(np.int64))
        vals.append(rng.standard_normal(c.size))
        indptr.append(offset + np.cumsum(np.bincount(r, minlength=rows)))
        offset += c.size
    return sp.csr_matrix(
        (np.concatenate(vals), np.concatenate(cols), np.concatenate(indptr)), shape=(n, d)
    )


@time_and_memory()
def generate_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """Generate a dataset; deterministic for a fixed (spec, seed).

    Ground truth w* ~ N(0, I). Sparse examples keep each feature with probability `sparsity`,
    nonzeros ~ N(0, 1). Labels are sign(x.w* + eps) (zero -> +1) or x.w* + eps.
    """
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(spec.d)
    if spec.sparsity >= 1.0:
        examples = rng.standard_normal((spec.n, spec.d))
        margins = examples @ w_star
    else:
        csr = _sparse_examples(rng, spec.n, spec.d, spec.sparsity)
        margins = np.asarray(csr @ w_star).reshape(-1)
    noisy = margins + spec.noise_sigma * rng.standard_normal(spec.n)
    if spec.task == CLASSIFICATION:
        labels = np.where(noisy >= 0.0, 1.0, -1.0)
    else:
        labels = noisy
    if spec.sparsity >= 1.0:
        return Dataset(labels, spec.d, dense=examples)
    return Dataset(labels, spec.d, sparse=csr)
