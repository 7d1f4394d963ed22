# dualkoord/mapping.py
"""Mapping of objectives and training engines.
This module provides a centralized dictionary to access the models and engines by name.
"""
from functools import partial

from dualkoord.engines.partitioned import DYNAMIC, STATIC, PartitionedRunner
from dualkoord.engines.sequential import SequentialRunner
from dualkoord.engines.wild import WildRunner
from dualkoord.errors import ConfigError

DUALKOORD_MODELS = {
    "objective": {
        "logistic": {
            "name": "L2-regularized Logistic Regression",
            "task": "classification",
        },
        "ridge": {
            "name": "Ridge Regression",
            "task": "regression",
        },
    },
    "engine": {
        "sequential": {
            "runner": SequentialRunner,
            "name": "Sequential SDCA",
            "alias": "sequential",
        },
        "wild": {
            "runner": WildRunner,
            "name": "Wild asynchronous SDCA",
            "alias": "wild",
        },
        "static_partitioned": {
            "runner": partial(PartitionedRunner, mode=STATIC),
            "name": "Statically partitioned replicas",
            "alias": "static",
        },
        "dynamic_hierarchical": {
            "runner": partial(PartitionedRunner, mode=DYNAMIC),
            "name": "Dynamic hierarchical partitioning",
            "alias": "dynamic",
        },
    },
}

ENGINE_ALIASES = {
    **{name: name for name in DUALKOORD_MODELS["engine"]},
    **{entry["alias"]: name for name, entry in DUALKOORD_MODELS["engine"].items()},
}


def resolve_engine(name: str) -> str:
    """Canonical engine name for a name or its short alias."""
    try:
        return ENGINE_ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown engine {name!r}, expected one of {sorted(ENGINE_ALIASES)}") from None


def objective_task(kind: str) -> str:
    """Synthetic label task (``classification`` or ``regression``) matching an objective kind."""
    try:
        return DUALKOORD_MODELS["objective"][kind]["task"]
    except KeyError:
        known = sorted(DUALKOORD_MODELS["objective"])
        raise ConfigError(f"unknown objective {kind!r}, expected one of {known}") from None
