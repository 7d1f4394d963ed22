"""dualkoord package - parallel SDCA training of generalized linear models.

Expose config loader, decorators and the training entry points.
"""

from .config import load_config, load_default_config
from .decorators import time_and_memory
from .solver import Model, SolverConfig, train

__all__ = ["load_config", "load_default_config", "time_and_memory", "Model", "SolverConfig", "train"]
