"""Command-line entry point: ``generate``, ``train`` and ``bench``.

Exit codes: 0 converged, 1 usage or input error, 2 ran to max_epochs without converging.
"""
from __future__ import annotations

import argparse
import sys
from typing import Any, Dict, List, Optional, Sequence

from dualkoord.bench import ExperimentSpec, run_experiment, summarize, write_raw, write_summary
from dualkoord.config import load_config, parse_groups, topology_overrides_from_config, topology_overrides_from_env
from dualkoord.data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset, split
from dualkoord.decorators import logger, set_log_level, time_and_memory
from dualkoord.errors import ConfigError, DualKoordError
from dualkoord.mapping import DUALKOORD_MODELS, ENGINE_ALIASES, objective_task
from dualkoord.solver import SolverConfig, train
from dualkoord.topology import probe

EXIT_CONVERGED = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_topology_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--groups", help="cores per group, e.g. 8,8,8,8")
    p.add_argument("--cache-line", type=int, help="cache line size in bytes")
    p.add_argument("--llc-bytes", type=int, help="last-level cache size in bytes")
    p.add_argument("--data-group", type=int, help="group holding the dataset")


def _add_solver_flags(p: argparse.ArgumentParser, multi: bool) -> None:
    if multi:
        p.add_argument("--engine", type=_str_list, help="comma-separated engines")
        p.add_argument("--threads", type=_int_list, help="comma-separated thread counts")
        p.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
        p.add_argument("--bucket", type=_str_list, help="comma-separated bucket modes (auto|on|off|N)")
    else:
        p.add_argument("--engine", choices=sorted(ENGINE_ALIASES))
        p.add_argument("--threads", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--bucket", help="auto|on|off|N")
        p.add_argument("--eval-objective", action="store_true", default=None,
                       help="record primal/dual/gap every epoch (excluded from epoch time)")
        p.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None,
                       help="keep one bucket order for the whole run")
        p.add_argument("--pin-threads", action="store_true", default=None, help="pin each worker to one core")
    p.add_argument("--objective", choices=sorted(DUALKOORD_MODELS["objective"]))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", help="replica subproblem scale: auto (gamma x threads) or a number")
    p.add_argument("--claim-grain", type=int)
    p.add_argument("--oversubscribe", action="store_true", default=None)
    p.add_argument("--test-fraction", type=float,
                   help="held-out share of the examples (default from the data section of the config, 0 disables)")
    _add_topology_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualkoord", description="Parallel SDCA trainer for generalized linear models")
    parser.add_argument("--config", help="YAML file merged over config/default.yaml")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--sparsity", type=float, default=1.0)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--task", choices=["classification", "regression"], default="classification")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=["bin", "libsvm"])
    gen.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train one model and emit the per-epoch report as CSV")
    tr.add_argument("dataset", help="GLMD binary or LibSVM text file")
    _add_solver_flags(tr, multi=False)
    tr.add_argument("--out", help="CSV output path (default stdout)")

    be = sub.add_parser("bench", help="run an engine x threads x bucket x seed sweep")
    be.add_argument("--experiment", help="preset name from the bench section of the config")
    be.add_argument("--dataset", help="dataset file; a synthetic dataset is generated otherwise")
    be.add_argument("--n", type=int, default=20000)
    be.add_argument("--d", type=int, default=100)
    be.add_argument("--sparsity", type=float, default=1.0)
    be.add_argument("--data-seed", type=int)
    _add_solver_flags(be, multi=True)
    be.add_argument("--out", help="summary CSV path (default stdout)")
    be.add_argument("--raw", help="optional per-seed CSV path")
    return parser


def _config_test_fraction(cfg: Dict[str, Any]) -> float:
    return float(cfg.get("data", {}).get("test_fraction") or 0.0)


def _test_fraction(args: argparse.Namespace, cfg: Dict[str, Any]) -> float:
    """`--test-fraction` when given, the config value otherwise."""
    return args.test_fraction if args.test_fraction is not None else _config_test_fraction(cfg)


def _topology(args: argparse.Namespace, cfg: Dict[str, Any]):
    overrides = topology_overrides_from_config(cfg)
    overrides.update(topology_overrides_from_env())
    if args.groups:
        overrides["groups"] = parse_groups(args.groups)
    if args.cache_line is not None:
        overrides["cache_line"] = args.cache_line
    if args.llc_bytes is not None:
        overrides["llc"] = args.llc_bytes
    if args.data_group is not None:
        overrides["data_group"] = args.data_group
    return probe(overrides)


@time_and_memory()
def cmd_generate(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    spec = SyntheticSpec(args.n, args.d, args.sparsity, args.noise, args.task)
    ds = generate_synthetic(spec, args.seed)
    fmt = args.format or cfg.get("data", {}).get("format", "bin")
    save_dataset(ds, args.out, fmt)
    print(f"n={ds.n} d={ds.d} nnz={ds.nnz} storage={ds.storage_kind} format={fmt} -> {args.out}")
    return EXIT_CONVERGED


@time_and_memory()
def cmd_train(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    topo = _topology(args, cfg)
    solver_cfg = SolverConfig.from_mapping(
        cfg.get("solver", {}), cfg.get("logistic"),
        engine=args.engine, threads=args.threads, seed=args.seed, bucket=args.bucket, objective=args.objective,
        tol=args.tol, max_epochs=args.max_epochs, gamma=args.gamma, sigma=args.sigma,
        claim_grain=args.claim_grain, eval_objective=args.eval_objective, shuffle=args.shuffle,
        oversubscribe=args.oversubscribe, pin_threads=args.pin_threads, **{"lambda": args.lam},
    )
    ds = load_dataset(args.dataset)
    test = None
    test_fraction = _test_fraction(args, cfg)
    if test_fraction:
        ds, test = split(ds, test_fraction, solver_cfg.seed)
    _, report = train(ds, solver_cfg, topo, test=test)
    if args.out:
        report.write_csv(args.out)
    else:
        report.write_csv(sys.stdout)
    if report.final_test_loss is not None:
        logger.info(f"final test loss {report.final_test_loss:.6f}")
    return EXIT_CONVERGED if report.converged else EXIT_NOT_CONVERGED


@time_and_memory()
def cmd_bench(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    bench_cfg = cfg.get("bench", {})
    solver = cfg.get("solver", {})
    preset: Dict[str, Any] = {}
    if args.experiment:
        try:
            preset = dict(bench_cfg.get("experiments", {})[args.experiment])
        except KeyError:
            raise ConfigError(f"unknown experiment {args.experiment!r}") from None
    objective = args.objective or preset.get("objective") or solver.get("objective", "logistic")
    dataset = args.dataset or SyntheticSpec(args.n, args.d, args.sparsity, task=objective_task(objective))
    spec = ExperimentSpec.from_preset(
        {
            "engines": [solver.get("engine", "sequential")],
            "threads": [int(solver.get("threads", 1))],
            "seeds": [int(solver.get("seed", 0))],
            "objective": solver.get("objective", "logistic"),
            "lam": float(solver.get("lambda", 1.0)),
            "tol": float(solver.get("tol", 1e-3)),
            "max_epochs": int(solver.get("max_epochs", 100)),
            "gamma": float(solver.get("gamma", 1.0)),
            "sigma": solver.get("sigma", "auto"),
            "claim_grain": int(solver.get("claim_grain", 64)),
            "test_fraction": _config_test_fraction(cfg),
            **preset,
        },
        dataset,
        engines=args.engine, threads=args.threads, seeds=args.seeds, buckets=args.bucket,
        objective=args.objective, lam=args.lam, tol=args.tol, max_epochs=args.max_epochs, gamma=args.gamma,
        sigma=args.sigma, claim_grain=args.claim_grain, oversubscribe=args.oversubscribe,
        test_fraction=args.test_fraction, data_seed=args.data_seed, out=args.out,
    )
    cells = run_experiment(spec, _topology(args, cfg))
    rows = summarize(cells)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            write_summary(rows, f)
    else:
        write_summary(rows, sys.stdout)
    if args.raw:
        write_raw(cells, args.raw)
    return EXIT_CONVERGED


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        set_log_level(args.log_level or cfg.get("logging", {}).get("level", "INFO"))
        return COMMANDS[args.command](args, cfg)
    except (DualKoordError, OSError) as exc:
        print(f"dualkoord: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
