import datetime
import io
import math
import random

import numpy as np
import pandas as pd
import pytest

from .conftest import submission_bytes
from .context import DATE, ROW_ID, TARGET, EntityKey, UnifiedSeriesTable, ingest_table
from forecast_harness.data.reconstruction import TEST_FILE, TRAIN_FILE
from forecast_harness.errors import (
    EmptyInput,
    EmptyIntersection,
    KeyMismatch,
    NegativeValue,
    NonFiniteValue,
    UnreadablePayload,
)
from forecast_harness.task.model import MetricSpec
from forecast_harness.validation.gate import (
    evaluate,
    magnitude_limits,
    validate_against_skeleton,
    validate_submission,
)
from forecast_harness.validation.metrics import ScoredPair, score, score_rmsle
from forecast_harness.validation.report import CheckId, CheckResult, MetricScores, ValidityReport


def _validate(payload, task, truth, history=None):
    frame = truth.frame
    ids = frame[ROW_ID].astype("int64")
    return validate_submission(
        payload,
        task.output,
        task.scope,
        expected_ids=sorted(ids),
        id_dates=dict(zip(ids, frame[DATE].dt.date)),
        magnitude_limits=magnitude_limits(truth, history, task.constraints.magnitude_factor) if history else None,
        non_negative=task.constraints.non_negative_values,
    )


def _frame(payload: bytes) -> pd.DataFrame:
    return pd.read_csv(io.BytesIO(payload))


def _to_bytes(frame: pd.DataFrame) -> bytes:
    return frame.to_csv(index=False).encode("utf-8")


def test_passing_submission_reports_ten_passes(task, reconstruction, truth_submission):
    report = _validate(truth_submission, task, reconstruction.hidden_truth)
    assert report.passed
    assert [check.check_id for check in report.checks] == list(CheckId)
    assert report.to_text().count(" PASS ") == 10


def test_missing_row_fails_row_count_only(task, reconstruction, truth_submission):
    short = _to_bytes(_frame(truth_submission).iloc[:-1])
    report = _validate(short, task, reconstruction.hidden_truth)
    assert report.get(CheckId.row_count).detail == "expected 96, got 95"
    assert len(report.checks) == 10
    assert not report.passed
    assert report.get(CheckId.required_columns).passed


def test_negative_value_fails_sign(task, reconstruction, truth_submission):
    frame = _frame(truth_submission)
    frame.loc[3, "sales"] = -1.0
    report = _validate(_to_bytes(frame), task, reconstruction.hidden_truth)
    assert [check.check_id for check in report.failures] == [CheckId.sign]


def test_duplicates_and_missing_values(task, reconstruction, truth_submission):
    frame = _frame(truth_submission)
    frame.loc[1, "id"] = frame.loc[0, "id"]
    frame["sales"] = frame["sales"].astype(object)
    frame.loc[5, "sales"] = "n/a"
    report = _validate(_to_bytes(frame), task, reconstruction.hidden_truth)
    failed = {check.check_id for check in report.failures}
    assert {CheckId.duplicates, CheckId.missing_values, CheckId.id_alignment} <= failed


def test_dated_submission_outside_horizon(task, reconstruction, truth_submission):
    frame = _frame(truth_submission)
    frame["date"] = reconstruction.hidden_truth.frame[DATE].dt.strftime("%Y-%m-%d").to_numpy()
    frame.loc[0, "date"] = "2017-07-30"
    report = _validate(_to_bytes(frame), task, reconstruction.hidden_truth)
    failed = {check.check_id for check in report.failures}
    assert CheckId.horizon_bounds in failed
    assert CheckId.hidden_boundary in failed


def test_magnitude_ceiling(task, reconstruction, truth_submission):
    history = ingest_table(reconstruction.public_files[TRAIN_FILE])
    assert _validate(truth_submission, task, reconstruction.hidden_truth, history).passed
    frame = _frame(truth_submission)
    frame.loc[2, "sales"] = 1e12
    report = _validate(_to_bytes(frame), task, reconstruction.hidden_truth, history)
    assert [check.check_id for check in report.failures] == [CheckId.magnitude]


def test_missing_columns_still_give_full_report(task, reconstruction):
    report = _validate(b"foo,bar\n1,2\n", task, reconstruction.hidden_truth)
    assert len(report.checks) == 10
    assert "missing columns" in report.get(CheckId.required_columns).detail


def test_unreadable_payload(task, reconstruction):
    with pytest.raises(UnreadablePayload):
        _validate(b"", task, reconstruction.hidden_truth)


@pytest.mark.parametrize("bad_id", ["inf", "-inf", "1e400"])
def test_infinite_id_gives_a_failed_report(task, reconstruction, truth_submission, bad_id):
    frame = _frame(truth_submission)
    frame["id"] = frame["id"].astype(object)
    frame.loc[0, "id"] = bad_id
    report = _validate(_to_bytes(frame), task, reconstruction.hidden_truth)
    assert len(report.checks) == 10
    assert not report.get(CheckId.id_alignment).passed
    assert "1 unexpected" in report.get(CheckId.id_alignment).detail


def test_fractional_id_is_not_aligned(task, reconstruction, truth_submission):
    frame = _frame(truth_submission)
    frame["id"] = frame["id"].astype(object)
    frame.loc[0, "id"] = f"{frame.loc[0, 'id']}.4"
    payload = _to_bytes(frame)
    report = _validate(payload, task, reconstruction.hidden_truth)
    assert report.get(CheckId.id_alignment).detail.startswith("1 expected ids missing, 1 unexpected")
    outcome = evaluate(payload, task, reconstruction.hidden_truth)
    assert not outcome.admissible
    assert outcome.scores is None


def test_validate_against_skeleton(task, reconstruction, truth_submission):
    history = ingest_table(reconstruction.public_files[TRAIN_FILE])
    skeleton = reconstruction.public_files[TEST_FILE]
    assert validate_against_skeleton(truth_submission, task, skeleton, history).passed
    frame = _frame(truth_submission).iloc[::-1]
    report = validate_against_skeleton(_to_bytes(frame), task, skeleton)
    assert [check.check_id for check in report.failures] == [CheckId.id_alignment]


def test_report_text_round_trip():
    report = ValidityReport([CheckResult("row_count", False, "expected 2, got 1"), CheckResult("sign", True)])
    assert ValidityReport.from_text(report.to_text()) == report
    with pytest.raises(ValueError):
        ValidityReport([CheckResult("sign", False)])
    with pytest.raises(ValueError):
        ValidityReport([CheckResult("sign", True), CheckResult("sign", True)])


def test_rmsle_analytic_cases():
    assert score_rmsle([(5.0, 5.0), (0.0, 0.0), (123.4, 123.4)]) == 0.0
    assert abs(score_rmsle([ScoredPair(math.e - 1.0, 0.0)]) - 1.0) < 1e-12
    assert abs(score_rmsle([(3.0, 0.0), (0.0, 3.0)]) - math.log(4.0)) < 1e-12


def test_rmsle_matches_naive_reimplementation():
    rng = random.Random(2024)
    for _ in range(1000):
        n = rng.randint(1, 64)
        pairs = [(rng.uniform(0, 1e4), rng.uniform(0, 1e4)) for _ in range(n)]
        naive = math.sqrt(sum((math.log(p + 1) - math.log(t + 1)) ** 2 for p, t in pairs) / n)
        assert abs(score_rmsle(pairs) - naive) < 1e-12
        assert abs(score_rmsle([(t, p) for p, t in pairs]) - naive) < 1e-12


def test_rmsle_grows_with_scale():
    truth = np.linspace(1, 50, 20)
    base = score_rmsle(zip(truth, truth))
    assert score_rmsle(zip(truth * 1.5, truth)) > base
    assert score_rmsle(zip(truth * 3.0, truth)) > score_rmsle(zip(truth * 1.5, truth))


def test_rmsle_errors():
    with pytest.raises(EmptyInput):
        score_rmsle([])
    with pytest.raises(NonFiniteValue) as excinfo:
        score_rmsle([(1.0, 1.0), (float("nan"), 1.0)])
    assert "1" in str(excinfo.value)
    with pytest.raises(NegativeValue):
        score_rmsle([(1.0, -1.0)])


def _table(values, start=datetime.date(2017, 7, 31)):
    return UnifiedSeriesTable.from_rows([
        (start + datetime.timedelta(days=i % 4), EntityKey(1 + i // 4, "A"), value) for i, value in enumerate(values)
    ])


METRICS = [MetricSpec("rmsle"), MetricSpec("mae"), MetricSpec("rmse")]


def test_score_perfect_and_constant():
    truth = _table([1.0] * 8)
    perfect = score(truth, truth, METRICS)
    assert perfect.values == {"rmsle": 0.0, "mae": 0.0, "rmse": 0.0}
    assert perfect.n == 8
    zeros = score(_table([0.0] * 8), truth, METRICS)
    assert abs(zeros.primary_value - math.log(2.0)) < 1e-12
    assert zeros.to_text().startswith("rmsle ")


def test_score_is_permutation_invariant():
    rng = np.random.default_rng(5)
    truth = _table(rng.uniform(0, 100, 12))
    pred = _table(rng.uniform(0, 100, 12))
    shuffled = UnifiedSeriesTable(frame=pred.frame.sample(frac=1.0, random_state=3).reset_index(drop=True))
    assert score(shuffled, truth, METRICS) == score(pred, truth, METRICS)


def test_score_key_errors():
    truth = _table([1.0] * 8)
    with pytest.raises(KeyMismatch):
        score(_table([1.0] * 7), truth, METRICS)
    with pytest.raises(EmptyIntersection):
        score(_table([1.0] * 8, start=datetime.date(2018, 1, 1)), truth, METRICS)


def test_evaluate_truth_scores_zero(task, reconstruction, truth_submission):
    history = ingest_table(reconstruction.public_files[TRAIN_FILE])
    outcome = evaluate(truth_submission, task, reconstruction.hidden_truth, history)
    assert outcome.admissible
    assert outcome.scores.primary_value == 0.0
    assert outcome.scores.n == len(reconstruction.hidden_truth)


def test_evaluate_inadmissible_carries_no_scores(task, reconstruction, truth_submission):
    short = _to_bytes(_frame(truth_submission).iloc[:-1])
    outcome = evaluate(short, task, reconstruction.hidden_truth)
    assert not outcome.admissible
    assert outcome.scores is None


def test_evaluate_scores_a_biased_forecast(task, reconstruction):
    payload = submission_bytes(reconstruction.hidden_truth, lambda values: values + 1.0)
    outcome = evaluate(payload, task, reconstruction.hidden_truth)
    assert outcome.admissible
    assert 0.0 < outcome.scores.primary_value < 1.0
    assert abs(outcome.scores.values["mae"] - 1.0) < 1e-9


def test_metric_scores_dict_round_trip():
    scores = MetricScores(values={"rmsle": 0.4352, "mae": 2.0}, primary="rmsle", n=2640)
    assert MetricScores.from_dict(scores.to_dict()) == scores
    with pytest.raises(ValueError):
        MetricScores(values={"mae": 1.0}, primary="rmsle", n=1)


def test_truth_frame_columns(reconstruction):
    assert {ROW_ID, TARGET} <= set(reconstruction.hidden_truth.frame.columns)
