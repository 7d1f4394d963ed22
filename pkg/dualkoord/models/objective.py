"""GLM objectives in SDCA form and their one-dimensional coordinate subproblems.

The shared vector is kept in primal scaling, w = (1/(lambda n)) sum_i alpha_i x_i; the raw
vector v = sum_i alpha_i x_i satisfies v = lambda n w, so adding delta A_ij to v_i is the same as
adding delta A_ij / (lambda n) to w_i.

Primal objectives:
    logistic  P(w) = (1/n) sum_i log(1 + exp(-y_i x_i.w)) + (lambda/2) |w|^2
    ridge     P(w) = (1/(2n)) sum_i (x_i.w - y_i)^2 + (lambda/2) |w|^2
Duals, with a_i = y_i alpha_i:
    logistic  D = (1/n) sum_i H(a_i) - (lambda/2) |w|^2,  H(a) = -a ln a - (1-a) ln(1-a)
    ridge     D = (1/n) sum_i (y_i alpha_i - alpha_i^2 / 2) - (lambda/2) |w|^2
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import entr

from dualkoord.data.dataset import Dataset
from dualkoord.errors import ConfigError, DimensionError, DomainError

RIDGE = 0
LOGISTIC = 1

KIND_CODES = {"ridge": RIDGE, "logistic": LOGISTIC}

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
CLAMP_EPS = 1e-12
BRACKET_WIDTH = 1e-14

# slack allowed on dual feasibility when evaluating objectives
_FEASIBILITY_SLACK = 1e-12


@dataclass(frozen=True)
class Objective:
    kind: str
    lam: float

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ConfigError(f"unknown objective {self.kind!r}, expected one of {sorted(KIND_CODES)}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]


@dataclass(frozen=True)
class CoordState:
    """State read by one coordinate update: alpha_j, y_j, x_j.w, |x_j|^2 and n."""
    alpha_j: float
    label_j: float
    dot_j: float
    norm_sq_j: float
    n: int


@njit(nogil=True, cache=True)
def ridge_step(alpha, label, dot, norm_sq, lam, n):
    """Closed-form minimizer of the squared-loss coordinate subproblem."""
    return (label - dot - alpha) / (1.0 + norm_sq / (lam * n))


@njit(nogil=True, cache=True)
def _logistic_grad(a, label, dot, c, ya):
    # derivative of H(a) - delta dot - delta^2 |x|^2 / (2 lambda n) with respect to a
    return math.log((1.0 - a) / a) - label * dot - c * (a - ya)


@njit(nogil=True, cache=True)
def logistic_step(alpha, label, dot, norm_sq, lam, n, tol, max_iter, eps):
    """Safeguarded Newton on a = y (alpha + delta) in [eps, 1 - eps]; returns delta."""
    c = norm_sq / (lam * n)
    ya = label * alpha
    lo = eps
    hi = 1.0 - eps
    if _logistic_grad(lo, label, dot, c, ya) <= 0.0:
        return label * lo - alpha
    if _logistic_grad(hi, label, dot, c, ya) >= 0.0:
        return label * hi - alpha
    a = min(max(ya, lo), hi)
    for _ in range(max_iter):
        g = _logistic_grad(a, label, dot, c, ya)
        if abs(g) <= tol:
            break
        if g > 0.0:
            lo = a
        else:
            hi = a
        if hi - lo < BRACKET_WIDTH:
            break
        step = a + g / (1.0 / a + 1.0 / (1.0 - a) + c)
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        a = step
    return label * a - alpha


@njit(nogil=True, cache=True)
def coordinate_step(kind, alpha, label, dot, norm_sq, lam, n, tol, max_iter, eps):
    if kind == RIDGE:
        return ridge_step(alpha, label, dot, norm_sq, lam, n)
    return logistic_step(alpha, label, dot, norm_sq, lam, n, tol, max_iter, eps)


def _check_finite(s: CoordState) -> None:
    if not all(math.isfinite(v) for v in (s.alpha_j, s.label_j, s.dot_j, s.norm_sq_j)):
        raise DomainError(f"non-finite coordinate state {s}")
    if s.norm_sq_j < 0 or s.n < 1:
        raise DomainError(f"invalid coordinate state {s}")


def ridge_delta(s: CoordState, obj: Objective) -> float:
    if obj.kind != "ridge":
        raise ConfigError(f"ridge_delta called with a {obj.kind} objective")
    _check_finite(s)
    return float(ridge_step(s.alpha_j, s.label_j, s.dot_j, s.norm_sq_j, obj.lam, s.n))


def logistic_delta(s: CoordState, obj: Objective, tol: float = NEWTON_TOL,
                   max_iter: int = NEWTON_MAX_ITER) -> float:
    """Maximizer delta of the logistic dual along coordinate j; keeps y (alpha + delta) in [0, 1]."""
    if obj.kind != "logistic":
        raise ConfigError(f"logistic_delta called with a {obj.kind} objective")
    _check_finite(s)
    if s.label_j not in (-1.0, 1.0):
        raise DomainError(f"logistic labels must be -1 or +1, got {s.label_j}")
    if not -_FEASIBILITY_SLACK <= s.label_j * s.alpha_j <= 1.0 + _FEASIBILITY_SLACK:
        raise DomainError(f"infeasible dual coordinate: y*alpha = {s.label_j * s.alpha_j}")
    return float(logistic_step(s.alpha_j, s.label_j, s.dot_j, s.norm_sq_j, obj.lam, s.n,
                               tol, max_iter, CLAMP_EPS))


def check_labels(ds: Dataset, obj: Objective) -> None:
    if obj.kind == "logistic" and not np.all(np.isin(ds.labels, (-1.0, 1.0))):
        raise DomainError("logistic regression requires labels in {-1, +1}")


def loss_value(w: np.ndarray, ds: Dataset, obj: Objective) -> float:
    """Mean unregularized loss: log-loss, or half squared error for ridge."""
    margins = ds.margins(w)
    if obj.kind == "logistic":
        return float(np.mean(np.logaddexp(0.0, -ds.labels * margins)))
    return float(0.5 * np.mean((margins - ds.labels) ** 2))


def primal_value(w: np.ndarray, ds: Dataset, obj: Objective) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (ds.d,):
        raise DimensionError(f"w has length {w.size}, dataset has d={ds.d}")
    return loss_value(w, ds, obj) + 0.5 * obj.lam * float(w @ w)


def dual_value(alpha: np.ndarray, w: np.ndarray, ds: Dataset, obj: Objective) -> float:
    alpha = np.asarray(alpha, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if alpha.shape != (ds.n,) or w.shape != (ds.d,):
        raise DimensionError(f"alpha/w of lengths {alpha.size}/{w.size} for n={ds.n}, d={ds.d}")
    reg = 0.5 * obj.lam * float(w @ w)
    if obj.kind == "logistic":
        a = ds.labels * alpha
        if a.size and (a.min() < -_FEASIBILITY_SLACK or a.max() > 1.0 + _FEASIBILITY_SLACK):
            raise DomainError("logistic dual requires y_i alpha_i in [0, 1]")
        a = np.clip(a, 0.0, 1.0)
        return float(np.mean(entr(a) + entr(1.0 - a))) - reg
    return float(np.mean(ds.labels * alpha - 0.5 * alpha * alpha)) - reg


def duality_gap(alpha: np.ndarray, w: np.ndarray, ds: Dataset, obj: Objective) -> float:
    return primal_value(w, ds, obj) - dual_value(alpha, w, ds, obj)


def shared_vector(alpha: np.ndarray, ds: Dataset, obj: Objective) -> np.ndarray:
    """w = (1/(lambda n)) sum_i alpha_i x_i, recomputed from scratch."""
    return ds.combine(alpha) / (obj.lam * ds.n)
