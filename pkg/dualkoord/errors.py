"""Exception types raised by dualkoord."""
from __future__ import annotations

from typing import Optional


class DualKoordError(Exception):
    """Base class for all dualkoord errors."""


class DatasetFormatError(DualKoordError, ValueError):
    """A dataset file or in-memory dataset violates its format."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(DualKoordError, ValueError):
    """Invalid solver configuration, topology override or thread plan."""


class DimensionError(DualKoordError, ValueError):
    """Vector or dataset dimensions do not match."""


class DomainError(DualKoordError, ValueError):
    """Input outside the mathematical domain of an objective (labels, dual feasibility, non-finite values)."""
