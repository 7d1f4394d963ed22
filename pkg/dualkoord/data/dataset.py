"""Example-major training dataset.

A dataset holds n examples x_1..x_n of dimension d (the columns of A in the SDCA formulation)
together with their labels. Dense data is stored as an (n, d) C-contiguous array so one example
is one contiguous row; sparse data is stored as a scipy CSR matrix whose rows are the examples,
with 0-based feature indices strictly increasing within each example.
"""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from dualkoord.errors import DatasetFormatError, DimensionError

DENSE = "dense"
SPARSE = "sparse"

Column = Union[np.ndarray, List[Tuple[int, float]]]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _check_sorted_rows(indptr: np.ndarray, indices: np.ndarray) -> None:
    nnz = indices.size
    if nnz < 2:
        return
    increasing = np.diff(indices) > 0
    # positions k where indices[k + 1] starts a new example are not compared
    starts = indptr[1:-1]
    starts = starts[(starts > 0) & (starts < nnz)]
    increasing[starts - 1] = True
    if not increasing.all():
        k = int(np.flatnonzero(~increasing)[0]) + 1
        row = int(np.searchsorted(indptr, k, side="right")) - 1
        raise DatasetFormatError(f"example {row}: feature indices are not strictly increasing")


class Dataset:
    """Immutable example-major training matrix with labels."""

    __slots__ = ("_labels", "_dense", "_sparse", "_d")

    def __init__(self, labels: np.ndarray, d: int, dense: Optional[np.ndarray] = None,
                 sparse: Optional[sp.csr_matrix] = None):
        if (dense is None) == (sparse is None):
            raise DatasetFormatError("exactly one of dense or sparse storage must be given")
        labels = np.array(labels, dtype=np.float64, copy=True).reshape(-1)
        if dense is not None:
            dense = np.ascontiguousarray(dense, dtype=np.float64).copy()
            if dense.ndim != 2 or dense.shape[1] != d:
                raise DimensionError(f"dense storage must have shape (n, {d}), got {dense.shape}")
            n = dense.shape[0]
            _freeze(dense)
        else:
            sparse = sp.csr_matrix(sparse, dtype=np.float64, copy=True)
            if sparse.shape[1] != d:
                raise DimensionError(f"sparse storage has {sparse.shape[1]} features, expected {d}")
            n = sparse.shape[0]
            if sparse.nnz and (sparse.indices.min() < 0 or sparse.indices.max() >= d):
                raise DatasetFormatError(f"feature index outside [0, {d})")
            _check_sorted_rows(sparse.indptr, sparse.indices)
            for arr in (sparse.data, sparse.indices, sparse.indptr):
                _freeze(arr)
        if labels.size != n:
            raise DimensionError(f"{labels.size} labels for {n} examples")
        self._labels = _freeze(labels)
        self._dense = dense
        self._sparse = sparse
        self._d = int(d)

    @classmethod
    def from_dense(cls, examples: np.ndarray, labels: Sequence[float]) -> "Dataset":
        examples = np.asarray(examples, dtype=np.float64)
        return cls(labels, examples.shape[1], dense=examples)

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence[Tuple[int, float]]], labels: Sequence[float],
                     d: int) -> "Dataset":
        """Build a sparse dataset from per-example lists of (feature_index, value) pairs."""
        indptr = np.zeros(len(columns) + 1, dtype=np.int64)
        indices: List[int] = []
        values: List[float] = []
        for j, col in enumerate(columns):
            for idx, val in col:
                indices.append(int(idx))
                values.append(float(val))
            indptr[j + 1] = len(indices)
        csr = sp.csr_matrix(
            (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
            shape=(len(columns), d),
        )
        return cls(labels, d, sparse=csr)

    @property
    def n(self) -> int:
        return int(self._labels.size)

    @property
    def d(self) -> int:
        return self._d

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def storage_kind(self) -> str:
        return DENSE if self._dense is not None else SPARSE

    @property
    def dense(self) -> Optional[np.ndarray]:
        return self._dense

    @property
    def sparse(self) -> Optional[sp.csr_matrix]:
        return self._sparse

    @property
    def nnz(self) -> int:
        if self._dense is not None:
            return int(np.count_nonzero(self._dense))
        return int(self._sparse.nnz)

    def column(self, j: int) -> Column:
        """Example j: a dense vector, or a list of (feature_index, value) pairs."""
        if self._dense is not None:
            return self._dense[j]
        lo, hi = self._sparse.indptr[j], self._sparse.indptr[j + 1]
        return [(int(i), float(v)) for i, v in zip(self._sparse.indices[lo:hi], self._sparse.data[lo:hi])]

    @property
    def examples(self) -> List[Column]:
        return [self.column(j) for j in range(self.n)]

    def margins(self, w: np.ndarray) -> np.ndarray:
        """Inner products x_j . w for every example."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.d,):
            raise DimensionError(f"vector of length {w.size} for a dataset with d={self.d}")
        if self._dense is not None:
            return self._dense @ w
        return np.asarray(self._sparse @ w).reshape(-1)

    def combine(self, coef: np.ndarray) -> np.ndarray:
        """Weighted sum of examples, sum_j coef_j x_j."""
        coef = np.asarray(coef, dtype=np.float64)
        if coef.shape != (self.n,):
            raise DimensionError(f"vector of length {coef.size} for a dataset with n={self.n}")
        if self._dense is not None:
            return self._dense.T @ coef
        return np.asarray(self._sparse.T @ coef).reshape(-1)

    def take(self, indices: Sequence[int]) -> "Dataset":
        """New dataset made of the given examples, in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        if self._dense is not None:
            return Dataset(self._labels[indices], self._d, dense=self._dense[indices])
        return Dataset(self._labels[indices], self._d, sparse=self._sparse[indices])

    def kernel_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, bool]:
        """Arrays consumed by the numba kernels: (dense, indptr, indices, values, is_sparse).

        The storage that is not in use is passed as empty placeholders so every kernel has a
        single signature per storage kind.
        """
        if self._dense is not None:
            empty_i = np.zeros(1, dtype=np.int64)
            return self._dense, empty_i, empty_i, np.zeros(0, dtype=np.float64), False
        return (np.zeros((0, 0), dtype=np.float64), self._sparse.indptr, self._sparse.indices,
                self._sparse.data, True)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.storage_kind != other.storage_kind or self.d != other.d or self.n != other.n:
            return False
        if not np.array_equal(self._labels, other._labels):
            return False
        if self._dense is not None:
            return bool(np.array_equal(self._dense, other._dense))
        a, b = self._sparse, other._sparse
        return bool(np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
                    and np.array_equal(a.data, b.data))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, d={self.d}, storage_kind={self.storage_kind!r}, nnz={self.nnz})"


def column_norms(ds: Dataset) -> np.ndarray:
    """Squared Euclidean norm of every example."""
    if ds.dense is not None:
        return np.einsum("ij,ij->i", ds.dense, ds.dense)
    csr = ds.sparse
    rows = np.repeat(np.arange(ds.n), np.diff(csr.indptr))
    return np.bincount(rows, weights=csr.data * csr.data, minlength=ds.n).astype(np.float64)


def split(ds: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded train/test split of the examples."""
    if not 0.0 < test_fraction < 1.0:
        raise DimensionError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(round(ds.n * test_fraction))
    if ds.n < 2 or n_test < 1 or n_test >= ds.n:
        raise DimensionError(f"test_fraction={test_fraction} leaves an empty split for n={ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.take(perm[n_test:]), ds.take(perm[:n_test])
