import datetime

import pytest

from .context import parse_task_file, serialize_task_file
from forecast_harness.errors import InconsistentDates, InvalidTaskFile, MissingField, UnknownMetric
from forecast_harness.task.codec import parse_manifest, serialize_manifest, split_list, join_list
from forecast_harness.task.model import (
    AccessScope,
    ConstraintSet,
    FileRole,
    MetricSpec,
    OutputForm,
    PriorKnowledge,
    TaskFile,
    ValidationOutcome,
    WorkspaceEntry,
    WorkspaceManifest,
    admissible,
    check_row_count,
    date_range,
    is_classical_degenerate,
    resolve_temporal_constraints,
)
from forecast_harness.validation.report import CheckId, CheckResult, MetricScores, ValidityReport

STORE_SALES_TASK = """\
# reconstructed Store Sales slice
[scope]
history_start = 2013-01-01
history_end = 2017-07-30
horizon_start = 2017-07-31
horizon_end = 2017-08-15
step_count = 16
timezone = America/Guayaquil

[prior]
domain_tag = retail
notes = grocery sales, weekly seasonality
seasonality_hints = 7

[output]
required_columns = id, sales
id_column = id
value_column = sales
required_row_count = 2640

[constraints]
leakage_boundary = 2017-07-30
max_submissions = 5
feature_availability_overrides = oil.csv=2017-07-30, transactions.csv=2017-07-30

[metrics]
metrics = rmsle

[endpoints]
base = /api
"""


def _task(**changes) -> str:
    text = STORE_SALES_TASK
    for old, new in changes.items():
        text = text.replace(old, new)
    return text


def _minimal(metrics=("rmsle",), overrides=None) -> TaskFile:
    day = datetime.date(2017, 8, 1)
    return TaskFile(
        scope=AccessScope(day - datetime.timedelta(days=30), day - datetime.timedelta(days=1), day, day, 1),
        prior=PriorKnowledge(),
        output=OutputForm(required_columns=["id", "sales"], id_column="id", value_column="sales",
                          required_row_count=10),
        constraints=ConstraintSet(leakage_boundary=day - datetime.timedelta(days=1),
                                  feature_availability_overrides=overrides or {}),
        metrics=[MetricSpec(m) for m in metrics],
    )


def test_parse_store_sales_task():
    task = parse_task_file(STORE_SALES_TASK)
    assert task.scope.cutoff == datetime.date(2017, 7, 30)
    assert task.scope.horizon_start == datetime.date(2017, 7, 31)
    assert task.scope.horizon_end == datetime.date(2017, 8, 15)
    assert task.scope.step_count == 16
    assert task.scope.timezone == "America/Guayaquil"
    assert task.output.required_row_count == 2640
    assert task.primary_metric.metric_id == "rmsle"
    assert task.constraints.max_submissions == 5
    assert task.constraints.magnitude_factor == 100.0
    assert task.constraints.feature_availability_overrides == {
        "oil.csv": datetime.date(2017, 7, 30),
        "transactions.csv": datetime.date(2017, 7, 30),
    }
    assert task.prior.notes == ("grocery sales", "weekly seasonality")
    assert task.prior.seasonality_hints == (7,)


def test_single_step_task():
    text = _task(**{
        "history_end = 2017-07-30": "history_end = 2017-07-31",
        "leakage_boundary = 2017-07-30": "leakage_boundary = 2017-07-31",
        "horizon_start = 2017-07-31": "horizon_start = 2017-08-01",
        "horizon_end = 2017-08-15": "horizon_end = 2017-08-01",
        "step_count = 16": "step_count = 1",
    })
    task = parse_task_file(text)
    assert task.scope.horizon_dates() == (datetime.date(2017, 8, 1),)


def test_cutoff_after_horizon_start_is_inconsistent():
    text = _task(**{
        "history_end = 2017-07-30": "history_end = 2017-08-01",
        "leakage_boundary = 2017-07-30": "leakage_boundary = 2017-08-01",
    })
    with pytest.raises(InconsistentDates):
        parse_task_file(text)


def test_step_count_mismatch_is_inconsistent():
    with pytest.raises(InconsistentDates):
        parse_task_file(_task(**{"step_count = 16": "step_count = 15"}))


def test_missing_field():
    with pytest.raises(MissingField) as excinfo:
        parse_task_file(_task(**{"value_column = sales\n": ""}))
    assert "value_column" in str(excinfo.value)
    assert excinfo.value.code == "MissingField"


def test_unknown_metric():
    with pytest.raises(UnknownMetric):
        parse_task_file(_task(**{"metrics = rmsle": "metrics = pinball"}))


def test_unknown_section_and_stray_line():
    with pytest.raises(InvalidTaskFile):
        parse_task_file(STORE_SALES_TASK + "[extras]\nkey = value\n")
    with pytest.raises(InvalidTaskFile):
        parse_task_file("stray = value\n" + STORE_SALES_TASK)


def test_leakage_boundary_must_equal_cutoff():
    with pytest.raises(InconsistentDates):
        parse_task_file(_task(**{"leakage_boundary = 2017-07-30": "leakage_boundary = 2017-07-29"}))


def test_override_after_horizon_end():
    with pytest.raises(InconsistentDates):
        parse_task_file(_task(**{"oil.csv=2017-07-30": "oil.csv=2017-09-01"}))


def test_round_trip_is_field_wise_equal():
    task = parse_task_file(STORE_SALES_TASK)
    assert parse_task_file(serialize_task_file(task)) == task


def test_list_escapes_survive_round_trip():
    items = ["LIQUOR,WINE,BEER", "plain"]
    assert split_list(join_list(items)) == items


def test_resolve_temporal_constraints():
    surface = resolve_temporal_constraints(parse_task_file(STORE_SALES_TASK))
    assert surface.observation_window[1] == datetime.date(2017, 7, 30)
    assert surface.hidden_boundary == (datetime.date(2017, 7, 31), datetime.date(2017, 8, 15))
    assert len(surface.hidden_dates) == 16
    assert surface.output_mode == "full_grid_forecast"
    assert surface.unresolved == ()
    assert max(surface.observation_window) < min(surface.hidden_dates)


def test_resolve_single_day_windows():
    day = datetime.date(2017, 8, 1)
    task = TaskFile(
        scope=AccessScope(day - datetime.timedelta(days=1), day - datetime.timedelta(days=1), day, day, 1),
        prior=PriorKnowledge(),
        output=OutputForm(["id", "sales"], "id", "sales", 1),
        constraints=ConstraintSet(leakage_boundary=day - datetime.timedelta(days=1)),
        metrics=[MetricSpec("rmsle")],
    )
    surface = resolve_temporal_constraints(task)
    assert surface.observation_window[0] == surface.observation_window[1]
    assert surface.hidden_dates == (day,)


def test_sixteen_step_boundary_matches_calendar():
    scope = AccessScope(datetime.date(2017, 7, 1), datetime.date(2017, 7, 30), datetime.date(2017, 7, 31),
                        datetime.date(2017, 8, 15), 16)
    expected, day = [], datetime.date(2017, 7, 31)
    while day <= datetime.date(2017, 8, 15):
        expected.append(day)
        day = day.fromordinal(day.toordinal() + 1)
    assert list(scope.horizon_dates()) == expected
    assert len(scope.history_dates()) == 30


def test_is_classical_degenerate():
    assert not is_classical_degenerate(parse_task_file(STORE_SALES_TASK))
    assert is_classical_degenerate(_minimal())
    assert not is_classical_degenerate(_minimal(metrics=("rmsle", "mae")))


def test_degenerate_is_monotone_in_override_removal():
    with_override = _minimal(overrides={"oil.csv": datetime.date(2017, 7, 31)})
    assert not is_classical_degenerate(with_override)
    assert is_classical_degenerate(_minimal())


def test_duplicate_metric_rejected():
    with pytest.raises(InvalidTaskFile):
        _minimal(metrics=("rmsle", "rmsle"))


def test_output_form_columns_must_contain_id_and_value():
    with pytest.raises(MissingField):
        OutputForm(required_columns=["id"], id_column="id", value_column="sales", required_row_count=1)


def test_check_row_count():
    task = parse_task_file(STORE_SALES_TASK)
    assert check_row_count(task, 165)
    assert not check_row_count(task, 164)


def _report(*passed):
    ids = list(CheckId)
    return ValidityReport([CheckResult(ids[i], ok, "" if ok else "failed") for i, ok in enumerate(passed)])


def test_admissible():
    assert admissible(ValidationOutcome(validity=_report(*[True] * 9)))
    assert not admissible(ValidationOutcome(validity=_report(True, True, True, True, False, True)))


def test_empty_report_is_vacuously_admissible_with_warning():
    outcome = ValidationOutcome(validity=ValidityReport())
    assert admissible(outcome)
    assert outcome.validity.warnings == (ValidityReport.EMPTY_WARNING,)
    assert "# warning" in outcome.validity.to_text()


def test_outcome_scores_only_when_admissible():
    scores = MetricScores(values={"rmsle": 0.5}, primary="rmsle", n=3)
    with pytest.raises(ValueError):
        ValidationOutcome(validity=_report(False), scores=scores)
    with pytest.raises(ValueError):
        ValidationOutcome(validity=_report(True), admissible=False)
    outcome = ValidationOutcome(validity=_report(True), scores=scores)
    assert ValidationOutcome.from_dict(outcome.to_dict()) == outcome


def test_manifest_invariants_and_round_trip():
    entries = [
        WorkspaceEntry("train.csv", FileRole.train, byte_length=10, content_digest="ab"),
        WorkspaceEntry("test.csv", FileRole.test_skeleton, byte_length=5, content_digest="cd"),
        WorkspaceEntry("oil.csv", FileRole.auxiliary, availability_end=datetime.date(2017, 7, 30)),
    ]
    manifest = WorkspaceManifest(entries=entries, hidden_rows=96, skeleton_covariates=["onpromotion"])
    assert parse_manifest(serialize_manifest(manifest)) == manifest
    with pytest.raises(InvalidTaskFile):
        WorkspaceManifest(entries=entries[1:])
    with pytest.raises(InvalidTaskFile):
        WorkspaceManifest(entries=entries + [entries[0]])


def test_manifest_checked_against_task_overrides():
    task = parse_task_file(STORE_SALES_TASK)
    manifest = WorkspaceManifest(entries=[
        WorkspaceEntry("train.csv", FileRole.train),
        WorkspaceEntry("oil.csv", FileRole.auxiliary, availability_end=datetime.date(2017, 7, 30)),
        WorkspaceEntry("stores.csv", FileRole.auxiliary, availability_end=datetime.date(2017, 7, 1)),
    ])
    problems = manifest.check_against(task)
    assert len(problems) == 1
    assert problems[0].startswith("stores.csv")


def test_date_range_is_inclusive():
    assert len(date_range(datetime.date(2017, 1, 1), datetime.date(2017, 1, 31))) == 31
