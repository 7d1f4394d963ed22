"""Per-epoch measurement and reporting: timing, primal/dual objectives, gap, relative change."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

import numpy as np

from dualkoord.data.dataset import Dataset
from dualkoord.errors import DatasetFormatError, DimensionError
from dualkoord.models.objective import Objective, dual_value, loss_value, primal_value

REAL_DIGITS = 17

CSV_HEADER = ["epoch", "time_s", "primal", "dual", "gap", "rel_change", "converged"]


def format_real(value: float) -> str:
    """Positional decimal text with 17 significant digits; ``inf`` and ``nan`` stay as they are."""
    if not math.isfinite(value):
        return str(float(value))
    return np.format_float_positional(value, precision=REAL_DIGITS, unique=False, fractional=False, trim="-")


@dataclass
class EpochRecord:
    epoch: int
    time_s: float
    primal: float
    dual: float
    gap: float
    rel_change: float
    converged: bool

    def same_as(self, other: "EpochRecord") -> bool:
        """Field-wise equality where NaN equals NaN."""
        def eq(a: float, b: float) -> bool:
            return (math.isnan(a) and math.isnan(b)) or a == b
        return (self.epoch == other.epoch and self.converged == other.converged
                and all(eq(getattr(self, f), getattr(other, f))
                        for f in ("time_s", "primal", "dual", "gap", "rel_change")))


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    config_echo: Dict[str, Any] = field(default_factory=dict)
    final_test_loss: Optional[float] = None

    @property
    def converged(self) -> bool:
        return bool(self.epochs) and self.epochs[-1].converged

    @property
    def num_epochs(self) -> int:
        return len(self.epochs)

    @property
    def train_time(self) -> float:
        return self.epochs[-1].time_s if self.epochs else 0.0

    def write_csv(self, out: Union[str, Path, TextIO]) -> None:
        if isinstance(out, (str, Path)):
            with open(out, "w", encoding="utf-8", newline="") as f:
                self.write_csv(f)
            return
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.epochs:
            reals = (r.time_s, r.primal, r.dual, r.gap, r.rel_change)
            writer.writerow([r.epoch, *(format_real(v) for v in reals), int(r.converged)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source: Union[str, Path, TextIO]) -> "TrainReport":
        if isinstance(source, (str, Path)):
            with open(source, "r", encoding="utf-8", newline="") as f:
                return cls.from_csv(f)
        reader = csv.reader(source)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise DatasetFormatError(f"unexpected report header {header}")
        epochs = []
        for lineno, row in enumerate(reader, start=2):
            try:
                epochs.append(EpochRecord(int(row[0]), *(float(v) for v in row[1:6]), bool(int(row[6]))))
            except (ValueError, IndexError):
                raise DatasetFormatError(f"malformed report row {row}", line=lineno) from None
        return cls(epochs=epochs)

    @classmethod
    def from_csv_text(cls, text: str) -> "TrainReport":
        return cls.from_csv(io.StringIO(text))


def evaluate_test_loss(w: np.ndarray, test: Dataset, obj: Objective) -> float:
    """Mean unregularized loss on held-out examples."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (test.d,):
        raise DimensionError(f"w has length {w.size}, test set has d={test.d}")
    return loss_value(w, test, obj)


def record_epoch(report: TrainReport, elapsed: float, model, ds: Dataset, obj: Objective,
                 rel_change: float, converged: bool, evaluate: bool = True) -> EpochRecord:
    """Append one record; `elapsed` is cumulative training time excluding evaluation."""
    if evaluate:
        primal = primal_value(model.w, ds, obj)
        dual = dual_value(model.alpha, model.w, ds, obj)
        gap = primal - dual
    else:
        primal = dual = gap = float("nan")
    if report.epochs and elapsed < report.epochs[-1].time_s:
        elapsed = report.epochs[-1].time_s
    record = EpochRecord(len(report.epochs) + 1, float(elapsed), primal, dual, gap, float(rel_change), bool(converged))
    report.epochs.append(record)
    return record
