import datetime
import json
import random

import pandas as pd
import pytest

from .conftest import CUTOFF, FIXTURE_FAMILIES, FIXTURE_STORES, HIDDEN_END, HIDDEN_START, make_spec
from .context import (
    FAMILY,
    ROW_ID,
    STORE,
    EntityKey,
    UnifiedSeriesTable,
    build_reconstruction,
    derive_task_file,
    generate_store_sales,
    ingest_table,
    load_reconstruction,
    write_reconstruction,
)
from forecast_harness.data.leakage import LeakageVerdict, check_boundary, strategy_verdict
from forecast_harness.data.reconstruction import (
    MANIFEST_FILE,
    PUBLIC_DIR,
    SEALED_DIR,
    TEST_FILE,
    TRAIN_FILE,
    SliceSpec,
)
from forecast_harness.data.summary import AGGREGATE_FIGURE, SUMMARY_FILE, visual_summary
from forecast_harness.data.table import SplitLabel, read_csv_strings
from forecast_harness.errors import (
    ConservationViolation,
    DuplicateKey,
    EmptyHiddenWindow,
    EmptyTable,
    InconsistentDates,
    MissingRawFile,
    MissingRequiredColumn,
    NegativeTarget,
    SpecDateOutsideData,
    UnparseableTimestamp,
)
from forecast_harness.task.model import AccessScope, FileRole

HEADER = "id,date,store_nbr,family,sales,onpromotion\n"


def _payload(*rows) -> bytes:
    return (HEADER + "".join(row + "\n" for row in rows)).encode("utf-8")


def _scope(cutoff=CUTOFF, start=HIDDEN_START, end=HIDDEN_END) -> AccessScope:
    return AccessScope(datetime.date(2017, 1, 1), cutoff, start, end, (end - start).days + 1)


def test_ingest_three_rows_single_entity():
    table = ingest_table(_payload(
        "0,2017-07-28,1,AUTOMOTIVE,3,0",
        "1,2017-07-29,1,AUTOMOTIVE,0,1",
        "2,2017-07-30,1,AUTOMOTIVE,5.5,",
    ))
    assert len(table) == 3
    assert table.cutoff is None
    assert table.entities() == (EntityKey(1, "AUTOMOTIVE"),)
    assert table.frame["onpromotion"].isna().sum() == 1
    assert table.has_row_ids


def test_ingest_duplicate_key():
    with pytest.raises(DuplicateKey) as excinfo:
        ingest_table(_payload("0,2017-07-30,1,AUTOMOTIVE,3,0", "1,2017-07-30,1,AUTOMOTIVE,4,0"))
    assert excinfo.value.entity == EntityKey(1, "AUTOMOTIVE")
    assert excinfo.value.date == datetime.date(2017, 7, 30)


def test_ingest_bad_rows():
    with pytest.raises(UnparseableTimestamp) as excinfo:
        ingest_table(_payload("0,2017-07-30,1,A,3,0", "1,30/07/2017,1,B,3,0"))
    assert excinfo.value.row == 2
    with pytest.raises(NegativeTarget):
        ingest_table(_payload("0,2017-07-30,1,A,-1,0"))
    with pytest.raises(MissingRequiredColumn):
        ingest_table(b"date,store_nbr,family\n2017-07-30,1,A\n")


def test_split_labels_respect_cutoff():
    table = ingest_table(_payload(
        "0,2017-07-29,1,A,1,0",
        "1,2017-07-30,1,A,1,0",
        "2,2017-07-31,1,A,1,0",
    )).with_split(CUTOFF)
    labels = {split.label: split for split in table.split_labels}
    assert labels[SplitLabel.train].end == CUTOFF
    assert labels[SplitLabel.hidden].start == HIDDEN_START
    assert len(table.history(CUTOFF)) == 2


def test_check_boundary_lag_seven():
    report = check_boundary(("sales_lag", 7), _scope())
    assert len(report.valid_dates) == 7
    assert len(report.invalid_dates) == 9
    assert min(report.valid_dates) == datetime.date(2017, 7, 31)
    assert max(report.valid_dates) == datetime.date(2017, 8, 6)
    assert min(report.invalid_dates) == datetime.date(2017, 8, 7)
    assert report.verdict == LeakageVerdict.partially_valid
    assert strategy_verdict(report, has_fallback=False) == LeakageVerdict.invalid
    assert strategy_verdict(report, has_fallback=True) == LeakageVerdict.fully_valid


def test_check_boundary_lag_sixteen_and_zero():
    assert check_boundary(("sales_lag", 16), _scope()).verdict == LeakageVerdict.fully_valid
    self_leak = check_boundary(("sales", 0), _scope())
    assert self_leak.verdict == LeakageVerdict.invalid
    assert len(self_leak.invalid_dates) == 16


def test_check_boundary_partitions_and_is_monotone():
    rng = random.Random(11)
    for _ in range(50):
        cutoff = datetime.date(2017, 6, 1) + datetime.timedelta(days=rng.randrange(60))
        horizon = rng.randrange(1, 30)
        scope = _scope(cutoff, cutoff + datetime.timedelta(days=1), cutoff + datetime.timedelta(days=horizon))
        previous = -1
        for lag in range(0, horizon + 2):
            report = check_boundary(("x", lag), scope)
            assert report.valid_dates | report.invalid_dates == set(scope.horizon_dates())
            assert not report.valid_dates & report.invalid_dates
            assert len(report.valid_dates) >= previous
            previous = len(report.valid_dates)


def test_synthetic_fixture_is_deterministic():
    first = generate_store_sales(3, stores=[1], family_count=2, start=datetime.date(2017, 7, 1))
    second = generate_store_sales(3, stores=[1], family_count=2, start=datetime.date(2017, 7, 1))
    assert first == second
    assert set(first) == {"train.csv", "oil.csv", "holidays_events.csv", "transactions.csv", "stores.csv"}
    oil = read_csv_strings(first["oil.csv"])
    assert pd.to_datetime(oil["date"]).max() > pd.Timestamp(HIDDEN_END)


def test_reconstruction_shape(reconstruction):
    truth = reconstruction.hidden_truth
    entities = len(FIXTURE_STORES) * FIXTURE_FAMILIES
    assert len(truth) == entities * 16
    assert reconstruction.manifest.hidden_rows == 96
    skeleton = read_csv_strings(reconstruction.public_files[TEST_FILE])
    assert len(skeleton) == 96
    assert "sales" not in skeleton.columns
    assert "onpromotion" in skeleton.columns
    assert reconstruction.manifest.skeleton_covariates == ("onpromotion",)
    assert truth.cutoff == CUTOFF


def test_reconstruction_conservation(raw_files, reconstruction):
    raw = read_csv_strings(raw_files[TRAIN_FILE])
    dates = pd.to_datetime(raw["date"])
    kept = raw[raw["store_nbr"].astype(int).isin(FIXTURE_STORES) & (dates <= pd.Timestamp(HIDDEN_END))]
    public = read_csv_strings(reconstruction.public_files[TRAIN_FILE])
    assert len(public) + len(reconstruction.hidden_truth) == len(kept)
    assert pd.to_datetime(public["date"]).max() == pd.Timestamp(CUTOFF)


def test_skeleton_ids_follow_public_ids(reconstruction):
    public = read_csv_strings(reconstruction.public_files[TRAIN_FILE])
    ids = reconstruction.hidden_truth.frame[ROW_ID].astype(int)
    assert ids.min() == public["id"].astype(int).max() + 1
    assert ids.is_monotonic_increasing


def test_auxiliary_files(raw_files, reconstruction):
    oil = read_csv_strings(reconstruction.public_files["oil.csv"])
    assert pd.to_datetime(oil["date"]).max() <= pd.Timestamp(CUTOFF)
    assert reconstruction.public_files["holidays_events.csv"] == raw_files["holidays_events.csv"]
    entry = reconstruction.manifest.get("oil.csv")
    assert entry.role == FileRole.auxiliary
    assert entry.availability_end == CUTOFF
    assert reconstruction.manifest.get("stores.csv").availability_end is None


def test_reconstruction_is_byte_deterministic(raw_files, slice_spec, reconstruction):
    again = build_reconstruction(raw_files, slice_spec)
    assert again.public_files == reconstruction.public_files
    assert again.manifest == reconstruction.manifest


def test_one_store_one_family(raw_files):
    spec = make_spec(stores={1}, families={"AUTOMOTIVE"})
    assert len(build_reconstruction(raw_files, spec).hidden_truth) == 16


def test_reconstruction_errors(raw_files):
    with pytest.raises(MissingRawFile):
        build_reconstruction({"oil.csv": raw_files["oil.csv"]}, make_spec())
    with pytest.raises(SpecDateOutsideData):
        build_reconstruction(raw_files, make_spec(stores={99}))
    late = SliceSpec({1}, datetime.date(2017, 9, 30), datetime.date(2017, 10, 1), datetime.date(2017, 10, 5))
    with pytest.raises(SpecDateOutsideData):
        build_reconstruction(raw_files, late)
    with pytest.raises(InconsistentDates):
        SliceSpec({1}, CUTOFF, HIDDEN_END, HIDDEN_START)


def test_hidden_grid_gap_breaks_conservation(raw_files):
    frame = read_csv_strings(raw_files[TRAIN_FILE])
    hole = frame.index[(frame["date"] == "2017-08-05") & (frame["store_nbr"] == "1")][0]
    payload = frame.drop(index=hole).to_csv(index=False).encode("utf-8")
    with pytest.raises(ConservationViolation) as excinfo:
        build_reconstruction(dict(raw_files, **{TRAIN_FILE: payload}), make_spec())
    assert excinfo.value.what == "hidden entity-day grid"
    assert excinfo.value.actual == excinfo.value.expected - 1


def test_lost_hidden_row_breaks_conservation(raw_files, mocker):
    real = ingest_table

    def lossy(payload, *args, **kwargs):
        return real(payload.rstrip(b"\n").rsplit(b"\n", 1)[0] + b"\n", *args, **kwargs)

    mocker.patch("forecast_harness.data.reconstruction.ingest_table", side_effect=lossy)
    with pytest.raises(ConservationViolation, match="public plus hidden rows"):
        build_reconstruction(raw_files, make_spec())


def test_empty_hidden_window():
    gap = generate_store_sales(1, stores=[1], family_count=1, start=datetime.date(2017, 7, 1),
                               end=datetime.date(2017, 7, 30))
    frame = read_csv_strings(gap["train.csv"])
    tail = frame.iloc[[-1]].assign(date="2017-08-20")
    payload = pd.concat([frame, tail]).to_csv(index=False).encode("utf-8")
    spec = SliceSpec({1}, datetime.date(2017, 7, 30), datetime.date(2017, 7, 31), datetime.date(2017, 8, 5))
    with pytest.raises(EmptyHiddenWindow):
        build_reconstruction({"train.csv": payload}, spec)


def test_write_and_load_reconstruction(tmp_path, reconstruction, slice_spec):
    task = derive_task_file(reconstruction, slice_spec, max_submissions=3)
    manifest_path = write_reconstruction(reconstruction, task, tmp_path)
    assert manifest_path == tmp_path / MANIFEST_FILE
    assert (tmp_path / SEALED_DIR / "hidden_truth.csv").is_file()
    assert not (tmp_path / PUBLIC_DIR / "hidden_truth.csv").exists()
    bundle = load_reconstruction(tmp_path)
    assert bundle.task == task
    assert bundle.manifest == reconstruction.manifest
    assert bundle.public_files == reconstruction.public_files
    assert bundle.hidden_truth.frame.equals(reconstruction.hidden_truth.frame)
    assert bundle.manifest.check_against(task) == ()


def test_derived_task(task, reconstruction):
    assert task.scope.step_count == 16
    assert task.constraints.leakage_boundary == CUTOFF
    assert task.output.required_row_count == len(reconstruction.hidden_truth)
    assert task.constraints.feature_availability_overrides == {"oil.csv": CUTOFF, "transactions.csv": CUTOFF}


def test_visual_summary(tmp_path, reconstruction):
    table = ingest_table(reconstruction.public_files[TRAIN_FILE])
    artifact = visual_summary(table, tmp_path)
    assert artifact.entity_count == len(FIXTURE_STORES) * FIXTURE_FAMILIES
    assert artifact.date_span[1] == CUTOFF
    assert artifact.missing_spans == ()
    assert artifact.figure_count == 1
    assert (tmp_path / AGGREGATE_FIGURE).read_bytes().startswith(b"\x89PNG")
    summary = json.loads((tmp_path / SUMMARY_FILE).read_text())
    assert summary["entity_count"] == artifact.entity_count
    assert len(summary["top_variance_entities"]) == 5


def test_visual_summary_single_row_and_gaps(tmp_path):
    single = ingest_table(_payload("0,2017-07-30,1,A,1,0"))
    artifact = visual_summary(single, tmp_path / "single")
    assert artifact.entity_count == 1
    assert artifact.missing_spans == ()

    gappy = UnifiedSeriesTable.from_rows([
        (datetime.date(2017, 7, 1), EntityKey(1, "A"), 1.0),
        (datetime.date(2017, 7, 5), EntityKey(1, "A"), 2.0),
    ])
    spans = visual_summary(gappy, tmp_path / "gappy").missing_spans
    assert [(s.start, s.end) for s in spans] == [(datetime.date(2017, 7, 2), datetime.date(2017, 7, 4))]

    with pytest.raises(EmptyTable):
        visual_summary(UnifiedSeriesTable.from_rows([]), tmp_path / "empty")


def test_table_columns():
    table = UnifiedSeriesTable.from_rows([(datetime.date(2017, 7, 1), EntityKey(2, "B"), 1.0, {"promo": 1.0})])
    assert table.covariates == ("promo",)
    assert list(table.frame[STORE]) == [2]
    assert list(table.frame[FAMILY]) == ["B"]
