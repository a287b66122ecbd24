"""Deterministic forecasters and submission assembly.

Every forecaster takes a table and an access scope and returns a table of
predictions over the scope's horizon. Only rows dated on or before the
cutoff are ever read.
"""

import datetime
import logging
from typing import Callable, Optional, Tuple

import pandas as pd

from ..data.leakage import LeakageReport, check_boundary
from ..data.table import (
    DATE,
    FAMILY,
    ROW_ID,
    STORE,
    TARGET,
    UnifiedSeriesTable,
    format_csv,
    parse_dates,
    read_csv_strings,
)
from ..errors import AlphaOutOfRange, EmptyHistory, MissingRequiredColumn
from ..task.model import AccessScope, OutputForm

logger = logging.getLogger(__name__)

Forecaster = Callable[[UnifiedSeriesTable, AccessScope], UnifiedSeriesTable]

DEFAULT_MEDIAN_WINDOW = 7
DEFAULT_SES_ALPHA = 0.3
WEEKDAY_LAG = 7
LAG_FEATURE = "weekday_lag"

SKELETON_COLUMNS = {"id": ROW_ID, "date": DATE, "store_nbr": STORE, "family": FAMILY}


def _visible(table: UnifiedSeriesTable, scope: AccessScope) -> pd.DataFrame:
    history = table.history(scope.cutoff).frame
    observed = set(zip(history[STORE], history[FAMILY]))
    for entity in table.entities():
        if (entity.store_id, entity.family) not in observed:
            raise EmptyHistory(entity)
    return history


def _constant(levels: pd.Series, scope: AccessScope, table: UnifiedSeriesTable) -> UnifiedSeriesTable:
    """Hold one level per entity across every horizon date."""
    horizon = pd.DataFrame({DATE: pd.to_datetime(list(scope.horizon_dates()))})
    frame = levels.clip(lower=0.0).rename(TARGET).reset_index().merge(horizon, how="cross")
    return UnifiedSeriesTable.from_frame(frame[[DATE, STORE, FAMILY, TARGET]], timezone=table.timezone)


def median_baseline_forecast(table: UnifiedSeriesTable, scope: AccessScope,
                             window: int = DEFAULT_MEDIAN_WINDOW) -> UnifiedSeriesTable:
    """Median of each entity's last ``window`` observations, flat over the horizon.

    Entities with fewer observations use what they have.
    """
    history = _visible(table, scope)
    recent = history.groupby([STORE, FAMILY], sort=True).tail(window)
    short = recent.groupby([STORE, FAMILY]).size()
    if (short < window).any():
        logger.debug(f"{int((short < window).sum())} entities have fewer than {window} observations")
    levels = recent.groupby([STORE, FAMILY], sort=True)[TARGET].median()
    return _constant(levels, scope, table)


def ses_forecast(table: UnifiedSeriesTable, scope: AccessScope, alpha: float = DEFAULT_SES_ALPHA) -> UnifiedSeriesTable:
    """Simple exponential smoothing; the final level is held over the horizon.

    The level starts at the first observation.
    """
    if not 0.0 < alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1], got {alpha}")
    history = _visible(table, scope)
    levels = history.groupby([STORE, FAMILY], sort=True)[TARGET].agg(
        lambda series: series.ewm(alpha=alpha, adjust=False).mean().iloc[-1],
    )
    return _constant(levels, scope, table)


def weekday_lag_forecast(
    table: UnifiedSeriesTable,
    scope: AccessScope,
    fallback: Optional[Forecaster] = None,
    lag_steps: int = WEEKDAY_LAG,
) -> Tuple[UnifiedSeriesTable, LeakageReport]:
    """Copy the target ``lag_steps`` days back wherever that day is visible.

    Cells the lag cannot reach take the fallback's prediction; without a
    fallback they are left out.
    """
    report = check_boundary((LAG_FEATURE, lag_steps), scope)
    history = _visible(table, scope)
    lag = datetime.timedelta(days=lag_steps)

    grid = pd.DataFrame({DATE: pd.to_datetime(list(scope.horizon_dates()))}).merge(
        history[[STORE, FAMILY]].drop_duplicates(), how="cross",
    )
    grid["_source"] = grid[DATE] - pd.Timedelta(lag)
    lagged = history[[DATE, STORE, FAMILY, TARGET]].rename(columns={DATE: "_source"})
    grid = grid.merge(lagged, on=["_source", STORE, FAMILY], how="left")

    uncovered = grid[TARGET].isna()
    if uncovered.any():
        if fallback is None:
            logger.debug(f"{int(uncovered.sum())} lag cells uncovered and no fallback")
            grid = grid[~uncovered]
        else:
            filler = fallback(table, scope).frame[[DATE, STORE, FAMILY, TARGET]]
            grid = grid.merge(filler, on=[DATE, STORE, FAMILY], how="left", suffixes=("", "_fallback"))
            grid[TARGET] = grid[TARGET].fillna(grid[f"{TARGET}_fallback"])
    predictions = UnifiedSeriesTable.from_frame(grid[[DATE, STORE, FAMILY, TARGET]], timezone=table.timezone)
    return predictions, report


def read_skeleton(payload: bytes) -> pd.DataFrame:
    """Read the test skeleton into canonical ``row_id, date, store_id, family`` columns."""
    raw = read_csv_strings(payload)
    for column in SKELETON_COLUMNS:
        if column not in raw.columns:
            raise MissingRequiredColumn(column)
    frame = raw[list(SKELETON_COLUMNS)].rename(columns=SKELETON_COLUMNS)
    frame[ROW_ID] = pd.to_numeric(frame[ROW_ID]).astype("int64")
    frame[DATE] = parse_dates(frame[DATE])
    frame[STORE] = pd.to_numeric(frame[STORE]).astype("int64")
    return frame


def to_submission(predictions: UnifiedSeriesTable, skeleton: pd.DataFrame, output: OutputForm) -> bytes:
    """Join predictions onto skeleton ids and write the submission CSV.

    Skeleton rows without a prediction get an empty value cell.
    """
    joined = skeleton.merge(predictions.frame[[DATE, STORE, FAMILY, TARGET]], on=[DATE, STORE, FAMILY], how="left")
    joined = joined.sort_values(ROW_ID, kind="mergesort")
    submission = pd.DataFrame({
        output.id_column: joined[ROW_ID].to_numpy(),
        output.value_column: joined[TARGET].astype("float64").to_numpy(),
    })
    extra = [c for c in output.required_columns if c not in submission.columns]
    if extra:
        raise MissingRequiredColumn(", ".join(extra))
    return format_csv(submission[list(output.required_columns)])
