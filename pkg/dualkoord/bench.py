"""Benchmark sweeps over engines, thread counts, bucket modes and seeds.

Each cell is one training run; cells run one at a time so timings stay clean. Failed cells are
reported as NA instead of aborting the sweep.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from dualkoord.data import Dataset, SyntheticSpec, generate_synthetic, load_dataset, split
from dualkoord.decorators import logger
from dualkoord.errors import ConfigError, DualKoordError
from dualkoord.mapping import resolve_engine
from dualkoord.metrics import format_real
from dualkoord.models.objective import Objective
from dualkoord.solver import BucketMode, SolverConfig, parse_bucket_mode, train
from dualkoord.topology import SystemTopology, probe

NA = "NA"
SUMMARY_HEADER = ["engine", "threads", "bucket", "runs", "converged_runs", "epochs", "time_to_converge_s",
                  "epoch_time_s", "test_loss"]
RAW_HEADER = ["engine", "threads", "bucket", "seed", "epochs", "converged", "time_to_converge_s",
              "epoch_time_s", "test_loss", "error"]


@dataclass
class ExperimentSpec:
    dataset: Union[str, SyntheticSpec]
    engines: List[str]
    threads: List[int]
    seeds: List[int]
    objective: str = "logistic"
    lam: float = 1.0
    buckets: List[BucketMode] = field(default_factory=lambda: ["auto"])
    tol: float = 1e-3
    max_epochs: int = 100
    gamma: float = 1.0
    sigma: Union[str, float] = "auto"
    test_fraction: float = 0.2
    data_seed: int = 0
    claim_grain: int = 64
    oversubscribe: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        if not self.engines or not self.threads or not self.seeds:
            raise ConfigError("an experiment needs at least one engine, one thread count and one seed")
        self.engines = [resolve_engine(e) for e in self.engines]
        self.buckets = [parse_bucket_mode(b) for b in (self.buckets or ["auto"])]
        Objective(self.objective, self.lam)

    @classmethod
    def from_preset(cls, preset: Mapping[str, Any], dataset: Union[str, SyntheticSpec],
                    **overrides: Any) -> "ExperimentSpec":
        """Preset values with every non-None override applied on top."""
        values = {**preset, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(dataset=dataset, **values)


@dataclass
class CellResult:
    engine: str
    threads: int
    bucket: BucketMode
    seed: int
    epochs: Optional[int] = None
    converged: bool = False
    train_time: Optional[float] = None
    test_loss: Optional[float] = None
    error: Optional[str] = None

    @property
    def time_to_converge(self) -> Optional[float]:
        return self.train_time if self.converged else None

    @property
    def epoch_time(self) -> Optional[float]:
        if self.train_time is None or not self.epochs:
            return None
        return self.train_time / self.epochs


def _fmt(value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return NA
    if isinstance(value, float):
        return format_real(value)
    return str(value)


def _median(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.median(present)) if present else None


def load_experiment_data(spec: ExperimentSpec) -> Tuple[Dataset, Optional[Dataset]]:
    """Training and held-out sets; no held-out set when `test_fraction` is 0."""
    if isinstance(spec.dataset, SyntheticSpec):
        ds = generate_synthetic(spec.dataset, spec.data_seed)
    else:
        ds = load_dataset(spec.dataset)
    if not spec.test_fraction:
        return ds, None
    return split(ds, spec.test_fraction, spec.data_seed)


def run_cell(train_ds: Dataset, test_ds: Optional[Dataset], spec: ExperimentSpec, engine: str, threads: int,
             bucket: BucketMode, seed: int, topo: SystemTopology) -> CellResult:
    cell = CellResult(engine, threads, bucket, seed)
    try:
        cfg = SolverConfig(engine=engine, threads=threads, max_epochs=spec.max_epochs, tol=spec.tol,
                           objective=Objective(spec.objective, spec.lam), bucket_mode=bucket, gamma=spec.gamma,
                           sigma=spec.sigma, seed=seed, claim_grain=spec.claim_grain,
                           oversubscribe=spec.oversubscribe)
        _, report = train(train_ds, cfg, topo, test=test_ds)
    except DualKoordError as exc:
        logger.warning(f"cell {engine}/{threads}/{bucket}/seed={seed} failed: {exc}")
        cell.error = str(exc)
        return cell
    cell.epochs = report.num_epochs
    cell.converged = report.converged
    cell.train_time = report.train_time
    cell.test_loss = report.final_test_loss
    return cell


def run_experiment(spec: ExperimentSpec, topo: Optional[SystemTopology] = None) -> List[CellResult]:
    """Run every (engine, threads, bucket, seed) cell serially."""
    topo = topo if topo is not None else probe()
    train_ds, test_ds = load_experiment_data(spec)
    cells = []
    for engine in spec.engines:
        for threads in spec.threads:
            for bucket in spec.buckets:
                for seed in spec.seeds:
                    cells.append(run_cell(train_ds, test_ds, spec, engine, threads, bucket, seed, topo))
    return cells


def summarize(cells: Sequence[CellResult]) -> List[Dict[str, Any]]:
    """Median over seeds per (engine, threads, bucket); epochs and times only count converged runs."""
    groups: Dict[Tuple[str, int, str], List[CellResult]] = {}
    for cell in cells:
        groups.setdefault((cell.engine, cell.threads, str(cell.bucket)), []).append(cell)
    rows = []
    for (engine, threads, bucket), group in groups.items():
        converged = [c for c in group if c.converged]
        rows.append({
            "engine": engine,
            "threads": threads,
            "bucket": bucket,
            "runs": len(group),
            "converged_runs": len(converged),
            "epochs": _median(c.epochs for c in converged),
            "time_to_converge_s": _median(c.time_to_converge for c in converged),
            "epoch_time_s": _median(c.epoch_time for c in group),
            "test_loss": _median(c.test_loss for c in group),
        })
    return rows


def write_summary(rows: Sequence[Mapping[str, Any]], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in SUMMARY_HEADER])


def write_raw(cells: Sequence[CellResult], out: Union[str, Path, TextIO]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="") as f:
            write_raw(cells, f)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RAW_HEADER)
    for c in cells:
        writer.writerow([c.engine, c.threads, c.bucket, c.seed, _fmt(c.epochs), int(c.converged),
                         _fmt(c.time_to_converge), _fmt(c.epoch_time), _fmt(c.test_loss), c.error or ""])
