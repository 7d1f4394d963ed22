"""SDCA training driver: configuration, model state, epoch loop and convergence checking."""
from __future__ import annotations

from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from time import perf_counter
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from dualkoord.data.dataset import Dataset, column_norms
from dualkoord.decorators import logger
from dualkoord.engines.kernels import SweepContext
from dualkoord.errors import ConfigError, DimensionError, DomainError
from dualkoord.mapping import DUALKOORD_MODELS, resolve_engine
from dualkoord.metrics import TrainReport, evaluate_test_loss, record_epoch
from dualkoord.models.objective import CLAMP_EPS, NEWTON_MAX_ITER, NEWTON_TOL, Objective, check_labels
from dualkoord.partition import ENTRY_BYTES, buckets_enabled, compute_bucket_size
from dualkoord.topology import SystemTopology, ThreadPlan, plan_threads, probe

SEQUENTIAL = "sequential"
WILD = "wild"
STATIC_PARTITIONED = "static_partitioned"
DYNAMIC_HIERARCHICAL = "dynamic_hierarchical"

BUCKET_MODES = ("auto", "on", "off")
REL_CHANGE_FLOOR = 1e-10
DIVERGENCE_STREAK = 3

BucketMode = Union[str, int]


def parse_bucket_mode(value: BucketMode) -> BucketMode:
    """``auto``, ``on``, ``off`` or a fixed positive bucket size."""
    if isinstance(value, str) and value in BUCKET_MODES:
        return value
    try:
        size = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bucket mode must be one of {BUCKET_MODES} or a size, got {value!r}") from None
    if size < 1:
        raise ConfigError(f"fixed bucket size must be >= 1, got {size}")
    return size


@dataclass
class SolverConfig:
    engine: str = SEQUENTIAL
    threads: int = 1
    max_epochs: int = 100
    tol: float = 1e-3
    objective: Objective = field(default_factory=lambda: Objective("logistic", 1.0))
    bucket_mode: BucketMode = "auto"
    gamma: float = 1.0
    seed: int = 0
    groups_override: Optional[Dict[str, Any]] = None
    claim_grain: int = 64
    shuffle: bool = True
    eval_objective: bool = False
    oversubscribe: bool = False
    pin_threads: bool = False
    newton_tol: float = NEWTON_TOL
    newton_max_iter: int = NEWTON_MAX_ITER
    clamp_eps: float = CLAMP_EPS
    sigma: Union[str, float] = "auto"

    def __post_init__(self):
        self.engine = resolve_engine(self.engine)
        self.bucket_mode = parse_bucket_mode(self.bucket_mode)
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.claim_grain < 1:
            raise ConfigError(f"claim_grain must be >= 1, got {self.claim_grain}")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ConfigError(f"clamp_eps must lie in (0, 0.5), got {self.clamp_eps}")
        if self.sigma != "auto":
            try:
                self.sigma = float(self.sigma)
            except (TypeError, ValueError):
                raise ConfigError(f"sigma must be \"auto\" or a number, got {self.sigma!r}") from None
            if not self.sigma > 0:
                raise ConfigError(f"sigma must be > 0, got {self.sigma}")

    @classmethod
    def from_mapping(cls, solver: Mapping[str, Any], logistic: Optional[Mapping[str, Any]] = None,
                     **overrides: Any) -> "SolverConfig":
        """Build a config from the ``solver`` (and ``logistic``) sections of a loaded YAML config."""
        values = dict(solver)
        values.update({k: v for k, v in overrides.items() if v is not None})
        logistic = logistic or {}
        return cls(
            engine=values.get("engine", SEQUENTIAL),
            threads=int(values.get("threads", 1)),
            max_epochs=int(values.get("max_epochs", 100)),
            tol=float(values.get("tol", 1e-3)),
            objective=Objective(values.get("objective", "logistic"), float(values.get("lambda", 1.0))),
            bucket_mode=values.get("bucket", "auto"),
            gamma=float(values.get("gamma", 1.0)),
            seed=int(values.get("seed", 0)),
            groups_override=values.get("groups_override"),
            claim_grain=int(values.get("claim_grain", 64)),
            shuffle=bool(values.get("shuffle", True)),
            eval_objective=bool(values.get("eval_objective", False)),
            oversubscribe=bool(values.get("oversubscribe", False)),
            pin_threads=bool(values.get("pin_threads", False)),
            sigma=values.get("sigma", "auto"),
            newton_tol=float(logistic.get("newton_tol", NEWTON_TOL)),
            newton_max_iter=int(logistic.get("newton_max_iter", NEWTON_MAX_ITER)),
            clamp_eps=float(logistic.get("clamp_eps", CLAMP_EPS)),
        )

    def resolve_sigma(self, replicas: int) -> float:
        """Subproblem scale for `replicas` replicas whose updates are added together."""
        if self.sigma == "auto":
            return self.gamma * replicas
        return float(self.sigma)

    def echo(self) -> Dict[str, Any]:
        out = asdict(self)
        out["objective"] = self.objective.kind
        out["lambda"] = self.objective.lam
        return out


@dataclass
class Model:
    """Dual coordinates alpha and the shared vector w in primal scaling (v = lambda n w)."""
    alpha: np.ndarray
    w: np.ndarray

    @classmethod
    def zeros(cls, n: int, d: int) -> "Model":
        return cls(np.zeros(n, dtype=np.float64), np.zeros(d, dtype=np.float64))

    def copy(self) -> "Model":
        return Model(self.alpha.copy(), self.w.copy())


def check_convergence(alpha_prev: np.ndarray, alpha_cur: np.ndarray, tol: float) -> Tuple[bool, float]:
    """Relative L2 change of the dual vector between two epochs and whether it is below `tol`."""
    if alpha_prev.shape != alpha_cur.shape:
        raise DimensionError(f"alpha lengths differ: {alpha_prev.size} vs {alpha_cur.size}")
    rel = float(np.linalg.norm(alpha_cur - alpha_prev) / max(np.linalg.norm(alpha_prev), REL_CHANGE_FLOOR))
    return rel < tol, rel


def resolve_bucket_size(mode: BucketMode, n: int, topo: SystemTopology) -> int:
    if isinstance(mode, int):
        return mode
    if mode == "off":
        return 1
    size = compute_bucket_size(topo.cache_line_bytes, ENTRY_BYTES)
    if mode == "on" or buckets_enabled(n, topo.llc_bytes, ENTRY_BYTES):
        return size
    return 1


def resolve_thread_plan(cfg: SolverConfig, topo: SystemTopology) -> ThreadPlan:
    if cfg.engine == SEQUENTIAL:
        if cfg.threads > 1:
            logger.warning(f"sequential engine ignores threads={cfg.threads}")
        return plan_threads(1, topo)
    return plan_threads(cfg.threads, topo, cfg.oversubscribe)


def build_engine(ds: Dataset, cfg: SolverConfig, topo: SystemTopology, executor: Optional[Executor] = None):
    """Bind the dataset and config to an engine runner; returns (runner, model, thread_plan)."""
    if ds.n < 1:
        raise DimensionError("cannot train on an empty dataset")
    check_labels(ds, cfg.objective)
    bucket_size = resolve_bucket_size(cfg.bucket_mode, ds.n, topo)
    thread_plan = resolve_thread_plan(cfg, topo)
    ctx = SweepContext(ds, column_norms(ds), cfg.objective, bucket_size, cfg.newton_tol, cfg.newton_max_iter,
                       cfg.clamp_eps)
    model = Model.zeros(ds.n, ds.d)
    runner = DUALKOORD_MODELS["engine"][cfg.engine]["runner"](ctx, model, cfg, thread_plan, topo, executor)
    return runner, model, thread_plan


def train(ds: Dataset, cfg: SolverConfig, topo: Optional[SystemTopology] = None,
          test: Optional[Dataset] = None) -> Tuple[Model, TrainReport]:
    """Run SDCA epochs until the relative change of alpha drops below `cfg.tol` or `cfg.max_epochs`."""
    topo = topo if topo is not None else probe(cfg.groups_override)
    total_threads = resolve_thread_plan(cfg, topo).total_threads
    pool = ThreadPoolExecutor(max_workers=total_threads, thread_name_prefix="dualkoord") \
        if total_threads > 1 else nullcontext()
    with pool as executor:
        runner, model, thread_plan = build_engine(ds, cfg, topo, executor)
        report = TrainReport(config_echo={**cfg.echo(), "topology": topo.describe(),
                                          "bucket_size": runner.ctx.bucket_size,
                                          "thread_plan": list(thread_plan.assignments)})
        logger.info(f"training {cfg.engine} on {ds!r}: threads={thread_plan.assignments}, "
                    f"bucket_size={runner.ctx.bucket_size}, objective={cfg.objective}")
        elapsed = 0.0
        increases = 0
        for epoch in range(1, cfg.max_epochs + 1):
            alpha_prev = model.alpha.copy()
            start = perf_counter()
            runner.run_epoch()
            elapsed += perf_counter() - start
            if not (np.all(np.isfinite(model.w)) and np.all(np.isfinite(model.alpha))):
                raise DomainError(f"non-finite model after epoch {epoch} ({cfg.engine}, gamma={cfg.gamma})")
            converged, rel = check_convergence(alpha_prev, model.alpha, cfg.tol)
            record = record_epoch(report, elapsed, model, ds, cfg.objective, rel, converged, cfg.eval_objective)
            logger.debug(f"epoch {epoch}: time={record.time_s:.4f}s rel_change={rel:.3e} gap={record.gap:.3e}")
            if cfg.eval_objective and epoch > 1:
                increases = increases + 1 if record.primal > report.epochs[-2].primal else 0
                if increases == DIVERGENCE_STREAK:
                    logger.warning(f"primal objective increased {DIVERGENCE_STREAK} epochs in a row; "
                                   f"consider a smaller gamma (currently {cfg.gamma})")
            if converged:
                break
    if test is not None:
        report.final_test_loss = evaluate_test_loss(model.w, test, cfg.objective)
    logger.info(f"{cfg.engine} finished after {report.num_epochs} epochs in {report.train_time:.4f}s "
                f"(converged={report.converged})")
    return model, report
