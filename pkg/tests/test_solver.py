"""Tests for the training driver and the four engines."""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from dualkoord.data import Dataset, SyntheticSpec, column_norms, generate_synthetic
from dualkoord.engines.kernels import SweepContext
from dualkoord.engines.partitioned import Replica, merge_group, reduce_replicas
from dualkoord.engines.sequential import epoch_sequential
from dualkoord.errors import ConfigError, DimensionError, DomainError
from dualkoord.models.objective import Objective, shared_vector
from dualkoord.partition import BucketPlan, make_rng
from dualkoord.solver import (
    DYNAMIC_HIERARCHICAL,
    SEQUENTIAL,
    STATIC_PARTITIONED,
    WILD,
    Model,
    SolverConfig,
    build_engine,
    check_convergence,
    resolve_bucket_size,
    train,
)
from dualkoord.topology import probe

ENGINES = [SEQUENTIAL, WILD, STATIC_PARTITIONED, DYNAMIC_HIERARCHICAL]


@pytest.fixture(autouse=True)
def _clear_env(monkeypatch):
    for name in ("DUALKOORD_CACHE_LINE", "DUALKOORD_LLC_BYTES", "DUALKOORD_GROUPS", "DUALKOORD_DATA_GROUP"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def topo():
    """Two groups of four cores with 64-byte cache lines, independent of the host."""
    return probe({"groups": [4, 4], "cache_line": 64}, query_os=False)


@pytest.fixture(scope="module")
def classification():
    return generate_synthetic(SyntheticSpec(203, 6), seed=1)


def config(engine, threads=1, **kwargs):
    kwargs.setdefault("objective", Objective("logistic", 0.1))
    return SolverConfig(engine=engine, threads=threads, **kwargs)


class TestSolverConfig:
    """Tests for config validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [dict(threads=0), dict(max_epochs=0), dict(tol=0.0), dict(gamma=0.0), dict(gamma=1.5),
         dict(claim_grain=0), dict(engine="turbo"), dict(bucket_mode="sometimes"), dict(bucket_mode=0),
         dict(sigma="big"), dict(sigma=0.0)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)

    def test_sigma(self):
        assert SolverConfig().resolve_sigma(4) == pytest.approx(4.0)
        assert SolverConfig(gamma=0.5).resolve_sigma(4) == pytest.approx(2.0)
        assert SolverConfig(sigma="3").resolve_sigma(4) == pytest.approx(3.0)

    def test_aliases(self):
        assert SolverConfig(engine="static").engine == STATIC_PARTITIONED
        assert SolverConfig(engine="dynamic").engine == DYNAMIC_HIERARCHICAL

    def test_bucket_modes(self, topo):
        assert resolve_bucket_size("off", 10, topo) == 1
        assert resolve_bucket_size("on", 10, topo) == 8
        assert resolve_bucket_size(5, 10, topo) == 5
        assert resolve_bucket_size("auto", 10, topo) == 1
        assert resolve_bucket_size("auto", 600_000, topo) == 8

    def test_bucket_size_follows_cache_line(self):
        wide = probe({"groups": [2], "cache_line": 128}, query_os=False)
        assert resolve_bucket_size("on", 10, wide) == 16


class TestCheckConvergence:
    """Tests for the relative-change criterion."""

    def test_identical(self):
        assert check_convergence(np.ones(3), np.ones(3), 1e-3) == (True, 0.0)

    def test_from_zero(self):
        converged, rel = check_convergence(np.zeros(2), np.array([1e-6, 0.0]), 1e-3)
        assert not converged
        assert math.isfinite(rel)

    def test_small_change(self):
        converged, rel = check_convergence(np.array([1.0, 0.0]), np.array([1.0, 0.0005]), 1e-3)
        assert converged
        assert rel == pytest.approx(5e-4)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            check_convergence(np.zeros(2), np.zeros(3), 1e-3)


class TestReduceReplicas:
    """Tests for the epoch-end reduction."""

    @staticmethod
    def _replicas():
        w = np.zeros(2)
        a = Replica.create(w, 1)
        b = Replica.create(w, 1)
        a.w_local[:] = [1.0, 0.0]
        b.w_local[:] = [0.0, 1.0]
        a.record([(0, 0.4)])
        b.record([(1, -0.6)])
        return w, a, b

    def test_additive(self):
        w, a, b = self._replicas()
        alpha = np.zeros(2)
        reduce_replicas(w, [a, b], 1.0, alpha)
        np.testing.assert_array_equal(w, [1.0, 1.0])
        np.testing.assert_array_equal(alpha, [0.4, -0.6])

    def test_scaled(self):
        w, a, b = self._replicas()
        alpha = np.zeros(2)
        reduce_replicas(w, [a, b], 0.5, alpha)
        np.testing.assert_allclose(w, [0.5, 0.5])
        np.testing.assert_allclose(alpha, [0.2, -0.3])

    def test_single_replica_identity(self):
        w = np.array([0.3, -0.1])
        r = Replica.create(w, 1)
        r.w_local[:] = [0.7, 0.2]
        reduce_replicas(w, [r], 1.0)
        np.testing.assert_array_equal(w, [0.7, 0.2])

    def test_replicas_reset(self):
        w, a, b = self._replicas()
        reduce_replicas(w, [a, b], 1.0)
        for r in (a, b):
            np.testing.assert_array_equal(r.w_local, w)
            np.testing.assert_array_equal(r.delta_w, [0.0, 0.0])
            assert r.owned_updates == []

    def test_overlap_detected(self):
        w, a, b = self._replicas()
        b.count = 0
        b.record([(0, 0.1)])
        with pytest.raises(AssertionError):
            reduce_replicas(w, [a, b], 1.0)

    def test_merge_group_prescales(self):
        w, a, b = self._replicas()
        merged = merge_group([a, b], 0.5)
        np.testing.assert_allclose(merged.delta_w, [0.5, 0.5])
        assert merged.owned_updates == [(0, pytest.approx(0.2)), (1, pytest.approx(-0.3))]


class TestSequentialEpoch:
    """Tests for the single-threaded epoch."""

    def test_one_example_ridge(self):
        ds = Dataset.from_dense(np.array([[1.0]]), [1.0])
        ctx = SweepContext(ds, column_norms(ds), Objective("ridge", 1.0), bucket_size=1)
        model = Model.zeros(1, 1)
        epoch_sequential(ctx, model, BucketPlan(1, 1), make_rng(0))
        np.testing.assert_allclose(model.alpha, [0.5])
        np.testing.assert_allclose(model.w, [0.5])

    def test_trace_covers_in_bucket_order(self, classification):
        ctx = SweepContext(classification, column_norms(classification), Objective("logistic", 0.1), bucket_size=8)
        model = Model.zeros(classification.n, classification.d)
        (trace,) = epoch_sequential(ctx, model, BucketPlan(classification.n, 8), make_rng(0), collect_trace=True)
        assert sorted(trace.tolist()) == list(range(classification.n))


class TestTrain:
    """Tests for train()."""

    def test_ridge_matches_closed_form(self):
        ds = generate_synthetic(SyntheticSpec(50, 10, task="regression"), seed=0)
        lam = 0.1
        cfg = config(SEQUENTIAL, objective=Objective("ridge", lam), max_epochs=500, tol=1e-14, bucket_mode="off")
        model, _ = train(ds, cfg, probe({"groups": [1]}, query_os=False))
        x, y = ds.dense, ds.labels
        w_star = np.linalg.solve(x.T @ x / ds.n + lam * np.eye(ds.d), x.T @ y / ds.n)
        assert np.linalg.norm(model.w - w_star) / np.linalg.norm(w_star) < 1e-4

    def test_max_epochs_one(self, classification, topo):
        _, report = train(classification, config(SEQUENTIAL, max_epochs=1, tol=1e-12), topo)
        assert report.num_epochs == 1
        assert report.epochs[0].epoch == 1
        assert not report.converged

    def test_stops_on_convergence(self, classification, topo):
        _, report = train(classification, config(SEQUENTIAL, max_epochs=200, tol=1e-3), topo)
        assert report.converged
        assert report.num_epochs < 200
        assert [r.converged for r in report.epochs].count(True) == 1

    def test_logistic_label_domain(self, topo):
        ds = generate_synthetic(SyntheticSpec(20, 3, task="regression"), seed=0)
        with pytest.raises(DomainError):
            train(ds, config(SEQUENTIAL), topo)

    def test_config_echo(self, classification, topo):
        _, report = train(classification, config(DYNAMIC_HIERARCHICAL, threads=2, max_epochs=2), topo)
        assert report.config_echo["engine"] == DYNAMIC_HIERARCHICAL
        assert report.config_echo["thread_plan"] == [(0, 2)]
        assert report.config_echo["topology"]["groups"] == "4,4"

    def test_test_loss_reported(self, classification, topo):
        train_ds, test_ds = classification.take(range(150)), classification.take(range(150, 203))
        _, report = train(train_ds, config(SEQUENTIAL), topo, test=test_ds)
        assert 0.0 < report.final_test_loss < math.log(2.0)

    def test_gap_non_increasing(self, topo):
        ds = generate_synthetic(SyntheticSpec(5000, 50), seed=0)
        cfg = config(SEQUENTIAL, objective=Objective("logistic", 0.1), max_epochs=15, tol=1e-9, eval_objective=True)
        _, report = train(ds, cfg, topo)
        gaps = [r.gap for r in report.epochs]
        assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
        assert all(g >= -1e-9 for g in gaps)
        assert all(r.gap == pytest.approx(r.primal - r.dual) for r in report.epochs)

    @pytest.mark.parametrize("engine", [SEQUENTIAL, STATIC_PARTITIONED, DYNAMIC_HIERARCHICAL])
    def test_shared_vector_consistent(self, classification, topo, engine):
        threads = 1 if engine == SEQUENTIAL else 3
        model, _ = train(classification, config(engine, threads=threads, max_epochs=5, tol=1e-12), topo)
        w = shared_vector(model.alpha, classification, Objective("logistic", 0.1))
        assert np.max(np.abs(model.w - w)) <= 1e-6 * (1.0 + np.max(np.abs(model.w)))

    @pytest.mark.parametrize("engine", ENGINES)
    def test_sparse_data(self, engine, topo):
        ds = generate_synthetic(SyntheticSpec(300, 40, sparsity=0.1), seed=2)
        threads = 1 if engine == SEQUENTIAL else 4
        model, report = train(ds, config(engine, threads=threads, max_epochs=50), topo)
        assert report.converged
        assert np.all(np.isfinite(model.w))


class TestSingleThreadIdentity:
    """Every engine on one thread reproduces the sequential trajectory bit for bit."""

    @pytest.mark.parametrize("engine", [WILD, STATIC_PARTITIONED, DYNAMIC_HIERARCHICAL])
    @pytest.mark.parametrize("bucket", ["off", "on"])
    def test_alpha_identical(self, classification, topo, engine, bucket):
        ref, _ = train(classification, config(SEQUENTIAL, max_epochs=4, tol=1e-15, bucket_mode=bucket, seed=7), topo)
        got, _ = train(classification, config(engine, max_epochs=4, tol=1e-15, bucket_mode=bucket, seed=7), topo)
        assert np.array_equal(ref.alpha, got.alpha)
        assert np.array_equal(ref.w, got.w)

    def test_seed_changes_trajectory(self, classification, topo):
        a, _ = train(classification, config(SEQUENTIAL, max_epochs=2, tol=1e-15, seed=1), topo)
        b, _ = train(classification, config(SEQUENTIAL, max_epochs=2, tol=1e-15, seed=2), topo)
        assert not np.array_equal(a.alpha, b.alpha)

    def test_no_shuffle_is_index_order(self, classification, topo):
        runner, _, _ = build_engine(classification, config(SEQUENTIAL, shuffle=False, bucket_mode="off"), topo)
        (trace,) = runner.run_epoch(collect_trace=True)
        np.testing.assert_array_equal(trace, np.arange(classification.n))


class TestCoverage:
    """Every coordinate is updated exactly once per epoch."""

    @pytest.mark.parametrize("engine", ENGINES)
    @pytest.mark.parametrize("threads", [1, 2, 4, 8])
    def test_exactly_once(self, classification, topo, engine, threads):
        if engine == SEQUENTIAL and threads > 1:
            pytest.skip("sequential engine is single-threaded")
        cfg = config(engine, threads=threads, bucket_mode="on", claim_grain=1)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runner, _, _ = build_engine(classification, cfg, topo, pool)
            for _ in range(3):
                traces = runner.run_epoch(collect_trace=True)
                visits = np.concatenate(traces)
                np.testing.assert_array_equal(np.sort(visits), np.arange(classification.n))

    @pytest.mark.parametrize("engine", ENGINES)
    def test_buckets_are_contiguous(self, classification, topo, engine):
        threads = 1 if engine == SEQUENTIAL else 4
        cfg = config(engine, threads=threads, bucket_mode="on")
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runner, _, _ = build_engine(classification, cfg, topo, pool)
            assert runner.ctx.bucket_size == 8
            for trace in runner.run_epoch(collect_trace=True):
                for prev, cur in zip(trace[:-1], trace[1:]):
                    if cur % 8:
                        assert cur == prev + 1

    def test_dynamic_thread_sets_change(self, topo):
        ds = generate_synthetic(SyntheticSpec(4000, 50), seed=0)
        cfg = config(DYNAMIC_HIERARCHICAL, threads=2, bucket_mode="off", claim_grain=1)
        with ThreadPoolExecutor(max_workers=2) as pool:
            runner, _, _ = build_engine(ds, cfg, topo, pool)
            per_epoch = [[frozenset(t.tolist()) for t in runner.run_epoch(collect_trace=True)] for _ in range(10)]
        assert any(len({epoch[t] for epoch in per_epoch}) > 1 for t in range(2))

    def test_static_thread_sets_fixed(self, classification, topo):
        cfg = config(STATIC_PARTITIONED, threads=2, bucket_mode="off")
        with ThreadPoolExecutor(max_workers=2) as pool:
            runner, _, _ = build_engine(classification, cfg, topo, pool)
            per_epoch = [[frozenset(t.tolist()) for t in runner.run_epoch(collect_trace=True)] for _ in range(5)]
        for t in range(2):
            assert len({epoch[t] for epoch in per_epoch}) == 1


class TestDisjointSupports:
    """With orthogonal examples no update is lost, so unscaled replicas match the sequential result."""

    @pytest.mark.parametrize("engine", [WILD, STATIC_PARTITIONED, DYNAMIC_HIERARCHICAL])
    def test_matches_sequential(self, topo, engine):
        n = 64
        labels = np.where(np.arange(n) % 3 == 0, -1.0, 1.0)
        ds = Dataset.from_dense(np.eye(n) * np.linspace(0.5, 2.0, n)[:, None], labels)
        ref, _ = train(ds, config(SEQUENTIAL, max_epochs=3, tol=1e-15), topo)
        got, _ = train(ds, config(engine, threads=2, max_epochs=3, tol=1e-15, sigma=1.0), topo)
        np.testing.assert_allclose(got.alpha, ref.alpha, rtol=0, atol=1e-12)
        np.testing.assert_allclose(got.w, ref.w, rtol=0, atol=1e-12)

    def test_multi_group(self, topo):
        """Six threads span both groups; reduction runs at both levels."""
        n = 96
        ds = Dataset.from_dense(np.eye(n), np.ones(n))
        ref, _ = train(ds, config(SEQUENTIAL, max_epochs=2, tol=1e-15), topo)
        got, _ = train(ds, config(DYNAMIC_HIERARCHICAL, threads=6, max_epochs=2, tol=1e-15, sigma=1.0), topo)
        np.testing.assert_allclose(got.alpha, ref.alpha, rtol=0, atol=1e-12)
