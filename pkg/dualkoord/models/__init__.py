from .objective import (
    LOGISTIC,
    RIDGE,
    CoordState,
    Objective,
    check_labels,
    coordinate_step,
    dual_value,
    duality_gap,
    logistic_delta,
    loss_value,
    primal_value,
    ridge_delta,
    shared_vector,
)

__all__ = [
    "LOGISTIC",
    "RIDGE",
    "CoordState",
    "Objective",
    "check_labels",
    "coordinate_step",
    "dual_value",
    "duality_gap",
    "logistic_delta",
    "loss_value",
    "primal_value",
    "ridge_delta",
    "shared_vector",
]
