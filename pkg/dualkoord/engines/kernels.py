"""Numba inner loop shared by every engine.

`sweep_buckets` visits the given buckets in order and, inside each bucket, the examples in
increasing index order. For each example j it reads x_j.w, solves the coordinate subproblem and
applies w += (delta / (lambda n)) x_j. The kernel releases the GIL, so engines run it on plain
Python threads for true parallelism; concurrent calls on one `w` are the "wild" updates (each
element store is a single aligned 8-byte write, so racing adds may be lost but never torn).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from dualkoord.data.dataset import Dataset
from dualkoord.models.objective import CLAMP_EPS, NEWTON_MAX_ITER, NEWTON_TOL, Objective, coordinate_step

_EMPTY_I64 = np.zeros(0, dtype=np.int64)
_EMPTY_F64 = np.zeros(0, dtype=np.float64)


@njit(nogil=True, cache=True)
def sweep_buckets(dense, indptr, indices, values, is_sparse, labels, norms, alpha, w,
                  buckets, bucket_size, write_alpha, kind, lam, tol, max_iter, eps,
                  trace, deltas, pos, sigma):
    n = labels.shape[0]
    d = w.shape[0]
    inv_scale = sigma / (lam * n)
    record = trace.shape[0] > 0
    keep_delta = deltas.shape[0] > 0
    for t in range(buckets.shape[0]):
        start = buckets[t] * bucket_size
        stop = min(start + bucket_size, n)
        for j in range(start, stop):
            dot = 0.0
            if is_sparse:
                for p in range(indptr[j], indptr[j + 1]):
                    dot += values[p] * w[indices[p]]
            else:
                for k in range(d):
                    dot += dense[j, k] * w[k]
            delta = coordinate_step(kind, alpha[j], labels[j], dot, sigma * norms[j], lam, n, tol, max_iter, eps)
            if write_alpha:
                alpha[j] += delta
            s = delta * inv_scale
            if is_sparse:
                for p in range(indptr[j], indptr[j + 1]):
                    w[indices[p]] += s * values[p]
            else:
                for k in range(d):
                    w[k] += s * dense[j, k]
            if record:
                trace[pos] = j
            if keep_delta:
                deltas[pos] = delta
            pos += 1
    return pos


@dataclass
class SweepContext:
    """Dataset arrays, precomputed norms and objective parameters bound once per training run."""

    ds: Dataset
    norms: np.ndarray
    objective: Objective
    bucket_size: int
    newton_tol: float = NEWTON_TOL
    newton_max_iter: int = NEWTON_MAX_ITER
    clamp_eps: float = CLAMP_EPS

    def __post_init__(self):
        self._arrays = self.ds.kernel_arrays()

    @property
    def n(self) -> int:
        return self.ds.n

    def examples_in(self, buckets: np.ndarray) -> int:
        """Number of examples covered by the given buckets."""
        if buckets.size == 0:
            return 0
        full = buckets.size * self.bucket_size
        last = (self.n - 1) // self.bucket_size
        if np.any(buckets == last):
            full -= last * self.bucket_size + self.bucket_size - self.n
        return int(full)

    def sweep(self, alpha: np.ndarray, w: np.ndarray, buckets: np.ndarray, *, write_alpha: bool = True,
              trace: np.ndarray = _EMPTY_I64, deltas: np.ndarray = _EMPTY_F64, pos: int = 0,
              sigma: float = 1.0) -> int:
        """Run the kernel over `buckets`; returns the trace position after the last visit.

        `sigma` scales both the step applied to `w` and the curvature seen by the coordinate solver
        (the local subproblem of a replica that shares its epoch with others); 1.0 is plain SDCA.
        """
        dense, indptr, indices, values, is_sparse = self._arrays
        return sweep_buckets(dense, indptr, indices, values, is_sparse, self.ds.labels, self.norms,
                             alpha, w, np.ascontiguousarray(buckets, dtype=np.int64), self.bucket_size,
                             write_alpha, self.objective.code, self.objective.lam, self.newton_tol,
                             self.newton_max_iter, self.clamp_eps, trace, deltas, pos, sigma)
