"""Tests for per-epoch records, the CSV report and test loss."""

import io
import math

import numpy as np
import pytest

from dualkoord.data import Dataset, SyntheticSpec, generate_synthetic
from dualkoord.errors import DatasetFormatError, DimensionError
from dualkoord.metrics import CSV_HEADER, EpochRecord, TrainReport, evaluate_test_loss, format_real, record_epoch
from dualkoord.models.objective import Objective
from dualkoord.solver import Model


@pytest.fixture
def report():
    return TrainReport(epochs=[
        EpochRecord(1, 0.125, 0.6, 0.1, 0.5, float("inf"), False),
        EpochRecord(2, 0.25, 0.55, 0.54, 0.01, 1.0 / 3.0, False),
        EpochRecord(3, 0.375, float("nan"), float("nan"), float("nan"), 2.5e-4, True),
    ])


class TestTrainReport:
    """Tests for the TrainReport CSV."""

    def test_header(self, report):
        assert report.to_csv().splitlines()[0] == ",".join(CSV_HEADER)

    def test_round_trip(self, report):
        back = TrainReport.from_csv_text(report.to_csv())
        assert back.num_epochs == 3
        assert all(a.same_as(b) for a, b in zip(report.epochs, back.epochs))

    def test_round_trip_file(self, report, tmp_path):
        path = tmp_path / "report.csv"
        report.write_csv(path)
        back = TrainReport.from_csv(path)
        assert back.epochs[1].rel_change == 1.0 / 3.0

    def test_seventeen_digits(self, report):
        row = report.to_csv().splitlines()[2]
        assert "0.33333333333333331" in row

    def test_properties(self, report):
        assert report.converged
        assert report.num_epochs == 3
        assert report.train_time == pytest.approx(0.375)
        assert not TrainReport().converged
        assert TrainReport().train_time == 0.0

    def test_bad_header(self):
        with pytest.raises(DatasetFormatError):
            TrainReport.from_csv(io.StringIO("a,b\n"))

    def test_bad_row(self):
        text = ",".join(CSV_HEADER) + "\n1,x,0,0,0,0,0\n"
        with pytest.raises(DatasetFormatError) as excinfo:
            TrainReport.from_csv_text(text)
        assert excinfo.value.line == 2


class TestEvaluateTestLoss:
    """Tests for evaluate_test_loss."""

    def test_zero_model(self):
        ds = generate_synthetic(SyntheticSpec(25, 4), seed=0)
        assert evaluate_test_loss(np.zeros(4), ds, Objective("logistic", 1.0)) == pytest.approx(math.log(2.0))

    def test_separable(self):
        ds = Dataset.from_dense(np.array([[1.0, 0.0], [-1.0, 0.0]]), [1.0, -1.0])
        assert evaluate_test_loss(np.array([20.0, 0.0]), ds, Objective("logistic", 1.0)) < 1e-3

    def test_ridge_exact(self):
        ds = Dataset.from_dense(np.array([[2.0]]), [3.0])
        assert evaluate_test_loss(np.array([1.5]), ds, Objective("ridge", 1.0)) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        ds = Dataset.from_dense(np.ones((2, 2)), [1.0, 1.0])
        with pytest.raises(DimensionError):
            evaluate_test_loss(np.zeros(3), ds, Objective("logistic", 1.0))


class TestRecordEpoch:
    """Tests for record_epoch."""

    def test_first_and_monotone(self):
        ds = generate_synthetic(SyntheticSpec(10, 2), seed=0)
        obj = Objective("logistic", 1.0)
        model = Model.zeros(10, 2)
        report = TrainReport()
        first = record_epoch(report, 0.5, model, ds, obj, float("inf"), False)
        second = record_epoch(report, 0.4, model, ds, obj, 0.0, True)
        assert first.epoch == 1
        assert second.epoch == 2
        assert second.time_s >= first.time_s
        assert first.gap == pytest.approx(math.log(2.0))
        assert first.gap == first.primal - first.dual

    def test_without_evaluation(self):
        ds = generate_synthetic(SyntheticSpec(10, 2), seed=0)
        report = TrainReport()
        rec = record_epoch(report, 0.1, Model.zeros(10, 2), ds, Objective("logistic", 1.0), 0.5, False, evaluate=False)
        assert math.isnan(rec.primal) and math.isnan(rec.gap)


class TestFormatReal:
    """Tests for format_real."""

    @pytest.mark.parametrize("value,text", [
        (0.125, "0.125"), (1e-5, "0.000010000000000000001"), (0.0, "0"), (-2.5, "-2.5"),
        (float("inf"), "inf"), (float("nan"), "nan"),
    ])
    def test_values(self, value, text):
        assert format_real(value) == text

    def test_report_rows_are_positional(self):
        report = TrainReport(epochs=[EpochRecord(1, 1e-5, 1e12, -3.5e-9, 2.5e-17, 1e-7, True)])
        row = report.to_csv().splitlines()[1]
        assert "e" not in row
        assert report.epochs[0].same_as(TrainReport.from_csv_text(report.to_csv()).epochs[0])
