"""Dataset file formats: LibSVM/SVMLight text and the dense ``GLMD`` binary format.

Binary layout (all little-endian): magic ``GLMD``, uint32 version (=1), uint64 n, uint64 d,
then n*d float64 values example-major, then n float64 labels.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import scipy.sparse as sp

from dualkoord.data.dataset import Dataset
from dualkoord.decorators import logger, time_and_memory
from dualkoord.errors import DatasetFormatError

PathLike = Union[str, Path]

BINARY_MAGIC = b"GLMD"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def _remap_labels(labels: np.ndarray) -> np.ndarray:
    """Map {0, 1} labels to {-1, +1}; anything else passes through."""
    values = np.unique(labels)
    if values.size and np.all(np.isin(values, (0.0, 1.0))) and 0.0 in values:
        return 2.0 * labels - 1.0
    return labels


@time_and_memory()
def load_libsvm(path: PathLike, expected_d: Optional[int] = None) -> Dataset:
    """Read a LibSVM text file into a sparse dataset.

    Args:
        path: file with one ``label idx:val idx:val ...`` line per example, 1-based indices.
        expected_d: feature count; defaults to the largest index seen.
    Returns:
        Dataset with sparse storage and 0-based feature indices.
    """
    labels: List[float] = []
    indices: List[int] = []
    values: List[float] = []
    indptr: List[int] = [0]
    max_index = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise DatasetFormatError(f"invalid label {tokens[0]!r}", line=lineno) from None
            prev = 0
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise DatasetFormatError(f"expected idx:val, got {tok!r}", line=lineno)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DatasetFormatError(f"malformed feature {tok!r}", line=lineno) from None
                if idx < 1:
                    raise DatasetFormatError(f"feature index {idx} is not 1-based", line=lineno)
                if idx <= prev:
                    raise DatasetFormatError(f"non-increasing index {idx} after {prev}", line=lineno)
                if expected_d is not None and idx > expected_d:
                    raise DatasetFormatError(f"index {idx} exceeds expected_d={expected_d}", line=lineno)
                prev = idx
                indices.append(idx - 1)
                values.append(val)
            max_index = max(max_index, prev)
            indptr.append(len(indices))
    d = expected_d if expected_d is not None else max_index
    csr = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), d),
    )
    ds = Dataset(_remap_labels(np.asarray(labels, dtype=np.float64)), d, sparse=csr)
    logger.info(f"loaded {ds!r} from {path}")
    return ds


def save_libsvm(ds: Dataset, path: PathLike) -> None:
    """Write a dataset as LibSVM text; reals use shortest round-trip formatting."""
    csr = ds.sparse if ds.sparse is not None else sp.csr_matrix(ds.dense)
    with open(path, "w", encoding="utf-8") as f:
        for j in range(ds.n):
            lo, hi = csr.indptr[j], csr.indptr[j + 1]
            feats = " ".join(f"{int(i) + 1}:{float(v)!r}" for i, v in zip(csr.indices[lo:hi], csr.data[lo:hi]))
            label = f"{float(ds.labels[j])!r}"
            f.write(f"{label} {feats}\n" if feats else f"{label}\n")


def save_binary(ds: Dataset, path: PathLike) -> None:
    """Write a dataset in the dense ``GLMD`` format; sparse data is densified."""
    if ds.dense is None:
        logger.warning(f"densifying sparse dataset ({ds.n} x {ds.d}) for binary output")
        dense = ds.sparse.toarray()
    else:
        dense = ds.dense
    with open(path, "wb") as f:
        f.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, ds.n, ds.d))
        f.write(np.ascontiguousarray(dense, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ds.labels, dtype="<f8").tobytes())


@time_and_memory()
def load_binary(path: PathLike) -> Dataset:
    """Read a dense dataset written by `save_binary`."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DatasetFormatError("truncated GLMD header")
        magic, version, n, d = _HEADER.unpack(header)
        if magic != BINARY_MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}, expected {BINARY_MAGIC!r}")
        if version != BINARY_VERSION:
            raise DatasetFormatError(f"unsupported GLMD version {version}")
        payload = np.frombuffer(f.read(), dtype="<f8")
    if payload.size != n * d + n:
        raise DatasetFormatError(f"GLMD payload holds {payload.size} values, expected {n * d + n}")
    dense = payload[: n * d].reshape(n, d).astype(np.float64)
    ds = Dataset(payload[n * d:].astype(np.float64), int(d), dense=dense)
    logger.info(f"loaded {ds!r} from {path}")
    return ds


def is_binary(path: PathLike) -> bool:
    with open(path, "rb") as f:
        return f.read(len(BINARY_MAGIC)) == BINARY_MAGIC


def load_dataset(path: PathLike, expected_d: Optional[int] = None) -> Dataset:
    """Load either format, sniffing the ``GLMD`` magic."""
    if is_binary(path):
        return load_binary(path)
    return load_libsvm(path, expected_d=expected_d)


def save_dataset(ds: Dataset, path: PathLike, fmt: str = "bin") -> None:
    if fmt == "bin":
        save_binary(ds, path)
    elif fmt == "libsvm":
        save_libsvm(ds, path)
    else:
        raise DatasetFormatError(f"unknown dataset format {fmt!r}")
