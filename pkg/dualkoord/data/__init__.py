"""Training data: the example-major Dataset, file formats and synthetic workloads."""

from .dataset import DENSE, SPARSE, Dataset, column_norms, split
from .formats import (
    load_binary,
    load_dataset,
    load_libsvm,
    save_binary,
    save_dataset,
    save_libsvm,
)
from .synthetic import CLASSIFICATION, REGRESSION, SyntheticSpec, generate_synthetic

__all__ = [
    "DENSE",
    "SPARSE",
    "Dataset",
    "column_norms",
    "split",
    "load_binary",
    "load_dataset",
    "load_libsvm",
    "save_binary",
    "save_dataset",
    "save_libsvm",
    "CLASSIFICATION",
    "REGRESSION",
    "SyntheticSpec",
    "generate_synthetic",
]
