"""Submission validity checks and the validation interface."""

import datetime
import logging
from typing import Mapping, Optional, Sequence

import attr
import numpy as np
import pandas as pd

from ..data.table import DATE, FAMILY, ROW_ID, STORE, TARGET, EntityKey, UnifiedSeriesTable, read_csv_strings
from ..errors import UnreadablePayload
from ..task.model import AccessScope, OrderingRule, OutputForm, TaskFile, ValidationOutcome
from .metrics import score
from .report import CheckId, CheckResult, ValidityReport

logger = logging.getLogger(__name__)

DATE_COLUMN = "date"
NO_DATES = "no date content to compare"
MAGNITUDE_FLOOR = 1.0  # ceiling base for entities whose history is all zero
SKELETON_STORE = "store_nbr"
SKELETON_FAMILY = "family"


@attr.s(frozen=True)
class ParsedSubmission:
    """Column views of a submission payload."""

    header = attr.ib(type=tuple)
    row_count = attr.ib(type=int)
    ids = attr.ib(type=Optional[pd.Series])
    values = attr.ib(type=Optional[pd.Series])
    dates = attr.ib(type=Optional[pd.Series])


def _decode(payload: bytes) -> pd.DataFrame:
    if not payload or not payload.strip():
        raise UnreadablePayload("empty payload")
    frame = read_csv_strings(payload)
    if frame.columns.empty:
        raise UnreadablePayload("payload has no header row")
    return frame.fillna("")


def integral_ids(column: pd.Series) -> pd.Series:
    """Parse an id column; cells that are not finite whole numbers become NaN."""
    ids = pd.to_numeric(column, errors="coerce")
    return ids.where(np.isfinite(ids) & (ids == ids.round()))


def _parse(frame: pd.DataFrame, output: OutputForm, id_dates: Optional[Mapping[int, datetime.date]]):
    ids = values = dates = None
    if output.id_column in frame.columns:
        ids = integral_ids(frame[output.id_column])
    if output.value_column in frame.columns:
        values = pd.to_numeric(frame[output.value_column].replace("", np.nan), errors="coerce")
    if DATE_COLUMN in frame.columns:
        dates = pd.to_datetime(frame[DATE_COLUMN], format="%Y-%m-%d", errors="coerce")
    elif id_dates is not None and ids is not None:
        lookup = {int(k): pd.Timestamp(v) for k, v in id_dates.items()}
        dates = pd.Series([lookup.get(int(i)) if pd.notna(i) else None for i in ids], dtype="datetime64[ns]")
    return ParsedSubmission(header=tuple(frame.columns), row_count=len(frame), ids=ids, values=values, dates=dates)


def _check_horizon_bounds(sub: ParsedSubmission, scope: AccessScope, **_) -> CheckResult:
    if sub.dates is None:
        return CheckResult(CheckId.horizon_bounds, True, NO_DATES)
    dates = sub.dates.dropna()
    outside = int(((dates < pd.Timestamp(scope.horizon_start)) | (dates > pd.Timestamp(scope.horizon_end))).sum())
    window = f"{scope.horizon_start}..{scope.horizon_end}"
    if outside:
        return CheckResult(CheckId.horizon_bounds, False, f"{outside} rows outside {window}")
    return CheckResult(CheckId.horizon_bounds, True, f"all dates inside {window}")


def _check_step_count(sub: ParsedSubmission, scope: AccessScope, **_) -> CheckResult:
    if sub.dates is None:
        return CheckResult(CheckId.step_count, True, NO_DATES)
    steps = int(sub.dates.dropna().nunique())
    if steps != scope.step_count:
        return CheckResult(CheckId.step_count, False, f"expected {scope.step_count} steps, got {steps}")
    return CheckResult(CheckId.step_count, True, f"{steps} steps")


def _check_hidden_boundary(sub: ParsedSubmission, scope: AccessScope, **_) -> CheckResult:
    if sub.dates is None:
        return CheckResult(CheckId.hidden_boundary, True, NO_DATES)
    early = int((sub.dates.dropna() <= pd.Timestamp(scope.history_end)).sum())
    if early:
        detail = f"{early} rows dated at or before cutoff {scope.history_end}"
        return CheckResult(CheckId.hidden_boundary, False, detail)
    return CheckResult(CheckId.hidden_boundary, True, f"no row at or before cutoff {scope.history_end}")


def _check_required_columns(sub: ParsedSubmission, output: OutputForm, **_) -> CheckResult:
    missing = [column for column in output.required_columns if column not in sub.header]
    if missing:
        return CheckResult(CheckId.required_columns, False, f"missing columns: {', '.join(missing)}")
    return CheckResult(CheckId.required_columns, True, ", ".join(output.required_columns))


def _check_row_count(sub: ParsedSubmission, output: OutputForm, **_) -> CheckResult:
    if sub.row_count != output.required_row_count:
        return CheckResult(CheckId.row_count, False, f"expected {output.required_row_count}, got {sub.row_count}")
    return CheckResult(CheckId.row_count, True, f"{sub.row_count} rows")


def _check_id_alignment(sub: ParsedSubmission, output: OutputForm, expected_ids: Sequence[int], **_) -> CheckResult:
    if sub.ids is None:
        return CheckResult(CheckId.id_alignment, False, f"id column {output.id_column} absent")
    unparseable = int(sub.ids.isna().sum())
    given = {int(i) for i in sub.ids.dropna()}
    problems = []
    if expected_ids:
        expected = {int(i) for i in expected_ids}
        missing, extra = len(expected - given), len(given - expected) + unparseable
        if missing or extra:
            problems.append(f"{missing} expected ids missing, {extra} unexpected")
    elif unparseable:
        problems.append(f"{unparseable} unparseable ids")
    if output.ordering_rule == OrderingRule.by_id_ascending and not sub.ids.dropna().is_monotonic_increasing:
        problems.append("ids not in ascending order")
    if problems:
        return CheckResult(CheckId.id_alignment, False, "; ".join(problems))
    return CheckResult(CheckId.id_alignment, True, f"{len(given)} ids aligned")


def _check_duplicates(sub: ParsedSubmission, **_) -> CheckResult:
    if sub.ids is None:
        return CheckResult(CheckId.duplicates, True, "no id column to compare")
    duplicated = int(sub.ids.dropna().duplicated().sum())
    if duplicated:
        return CheckResult(CheckId.duplicates, False, f"{duplicated} duplicate ids")
    return CheckResult(CheckId.duplicates, True, "no duplicate ids")


def _check_missing_values(sub: ParsedSubmission, output: OutputForm, **_) -> CheckResult:
    if sub.values is None:
        return CheckResult(CheckId.missing_values, False, f"value column {output.value_column} absent")
    missing = int(sub.values.isna().sum())
    if missing:
        return CheckResult(CheckId.missing_values, False, f"{missing} missing or non-numeric values")
    return CheckResult(CheckId.missing_values, True, "every row has a value")


def _check_sign(sub: ParsedSubmission, non_negative: bool, **_) -> CheckResult:
    if not non_negative:
        return CheckResult(CheckId.sign, True, "sign unconstrained")
    if sub.values is None:
        return CheckResult(CheckId.sign, True, "no values to compare")
    negative = int((sub.values < 0).sum())
    if negative:
        return CheckResult(CheckId.sign, False, f"{negative} negative values")
    return CheckResult(CheckId.sign, True, "no negative values")


def _check_magnitude(sub: ParsedSubmission, limits: Optional[Mapping[int, float]], **_) -> CheckResult:
    if sub.values is None:
        return CheckResult(CheckId.magnitude, True, "no values to compare")
    infinite = int(np.isinf(sub.values).sum())
    excessive = 0
    if limits and sub.ids is not None:
        ceilings = sub.ids.map(lambda i: limits.get(int(i), np.inf) if pd.notna(i) else np.inf)
        excessive = int((sub.values.abs() > ceilings).sum())
    if infinite or excessive:
        return CheckResult(CheckId.magnitude, False, f"{infinite} infinite values, {excessive} above entity ceiling")
    return CheckResult(CheckId.magnitude, True, "all values within entity ceilings")


CHECKS = {
    CheckId.horizon_bounds: _check_horizon_bounds,
    CheckId.step_count: _check_step_count,
    CheckId.hidden_boundary: _check_hidden_boundary,
    CheckId.required_columns: _check_required_columns,
    CheckId.row_count: _check_row_count,
    CheckId.id_alignment: _check_id_alignment,
    CheckId.duplicates: _check_duplicates,
    CheckId.missing_values: _check_missing_values,
    CheckId.sign: _check_sign,
    CheckId.magnitude: _check_magnitude,
}


def validate_submission(
    payload: bytes,
    output: OutputForm,
    scope: AccessScope,
    expected_ids: Sequence[int],
    id_dates: Optional[Mapping[int, datetime.date]] = None,
    magnitude_limits: Optional[Mapping[int, float]] = None,
    non_negative: bool = True,
) -> ValidityReport:
    """Run every validity check over a CSV submission.

    Dates come from a ``date`` column when the payload has one, else from
    ``id_dates``. ``magnitude_limits`` maps ids to the largest admissible
    prediction.
    """
    submission = _parse(_decode(payload), output, id_dates)
    checks = [
        check(
            submission,
            output=output,
            scope=scope,
            expected_ids=expected_ids,
            non_negative=non_negative,
            limits=magnitude_limits,
        )
        for check in CHECKS.values()
    ]
    report = ValidityReport(checks=checks)
    for failure in report.failures:
        logger.debug(f"validity check failed: {failure.to_line()}")
    return report


def magnitude_limits(truth: UnifiedSeriesTable, history: UnifiedSeriesTable, factor: float):
    """Map each hidden row id to ``factor`` times its entity's largest observed target."""
    maxima = history.max_target_by_entity()
    limits = {}
    for row_id, store, family in truth.frame[[ROW_ID, STORE, FAMILY]].itertuples(index=False):
        observed = maxima.get(EntityKey(int(store), family), MAGNITUDE_FLOOR)
        limits[int(row_id)] = factor * max(observed, MAGNITUDE_FLOOR)
    return limits


def evaluate(
    payload: bytes,
    task: TaskFile,
    truth: UnifiedSeriesTable,
    history: Optional[UnifiedSeriesTable] = None,
) -> ValidationOutcome:
    """Validate a submission and, only when admissible, score it against ``truth``."""
    if not truth.has_row_ids:
        raise ValueError("truth table carries no row ids")
    frame = truth.frame
    ids = frame[ROW_ID].astype("int64")
    id_dates = dict(zip(ids, frame[DATE].dt.date))
    limits = magnitude_limits(truth, history, task.constraints.magnitude_factor) if history is not None else None

    report = validate_submission(
        payload,
        task.output,
        task.scope,
        expected_ids=sorted(ids),
        id_dates=id_dates,
        magnitude_limits=limits,
        non_negative=task.constraints.non_negative_values,
    )
    if not report.passed:
        return ValidationOutcome(validity=report)

    submitted = _decode(payload)
    predictions = pd.DataFrame({
        ROW_ID: pd.to_numeric(submitted[task.output.id_column]).astype("int64"),
        "prediction": pd.to_numeric(submitted[task.output.value_column]).astype("float64"),
    })
    joined = frame[[ROW_ID, DATE, STORE, FAMILY]].astype({ROW_ID: "int64"}).merge(predictions, on=ROW_ID)
    pred_table = UnifiedSeriesTable.from_frame(joined.drop(columns=[ROW_ID]).rename(columns={"prediction": TARGET}))
    scores = score(pred_table, truth, task.metrics)
    return ValidationOutcome(validity=report, scores=scores)


def validate_against_skeleton(
    payload: bytes,
    task: TaskFile,
    skeleton: bytes,
    history: Optional[UnifiedSeriesTable] = None,
) -> ValidityReport:
    """Validate a submission offline against the public test skeleton.

    The skeleton supplies expected ids and their dates; ``history`` adds
    the magnitude ceiling.
    """
    frame = read_csv_strings(skeleton)
    id_column = task.output.id_column
    for column in (id_column, DATE_COLUMN, SKELETON_STORE, SKELETON_FAMILY):
        if column not in frame.columns:
            raise UnreadablePayload(f"skeleton has no {column} column")
    ids = integral_ids(frame[id_column])
    if ids.isna().any():
        raise UnreadablePayload("skeleton ids are not integers")
    ids = ids.astype("int64")
    dates = pd.to_datetime(frame[DATE_COLUMN], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        raise UnreadablePayload("skeleton dates are not YYYY-MM-DD")

    limits = None
    if history is not None:
        maxima = history.max_target_by_entity()
        factor = task.constraints.magnitude_factor
        stores = pd.to_numeric(frame[SKELETON_STORE], errors="coerce").fillna(0).astype("int64")
        limits = {
            int(row_id): factor * max(maxima.get(EntityKey(int(store), family), MAGNITUDE_FLOOR), MAGNITUDE_FLOOR)
            for row_id, store, family in zip(ids, stores, frame[SKELETON_FAMILY])
        }
    return validate_submission(
        payload,
        task.output,
        task.scope,
        expected_ids=sorted(ids),
        id_dates=dict(zip(ids, dates.dt.date)),
        magnitude_limits=limits,
        non_negative=task.constraints.non_negative_values,
    )
