"""Unified time-series table and CSV ingestion."""

import datetime
import io
import logging
from enum import auto
from typing import Dict, Mapping, Optional, Tuple

import attr
import numpy as np
import pandas as pd
from attr import define, field
from strenum import StrEnum

from ..errors import (
    DuplicateKey,
    InconsistentDates,
    InvalidEntity,
    InvalidTarget,
    MissingRequiredColumn,
    NegativeTarget,
    UnparseableTimestamp,
    UnreadablePayload,
)
from ..task.model import Granularity

logger = logging.getLogger(__name__)

DATE_FORMAT = "%Y-%m-%d"

# canonical column names inside a table frame
DATE = "date"
STORE = "store_id"
FAMILY = "family"
TARGET = "target"
ROW_ID = "row_id"
KEY_COLUMNS = [STORE, FAMILY, DATE]


class ColumnRole(StrEnum):
    """Role of a payload column in the unified table."""

    date = auto()
    store = auto()
    family = auto()
    target = auto()
    covariate = auto()
    id = auto()
    ignore = auto()


REQUIRED_ROLES = (ColumnRole.date, ColumnRole.store, ColumnRole.family, ColumnRole.target)

STORE_SALES_SCHEMA = {
    "id": ColumnRole.id,
    "date": ColumnRole.date,
    "store_nbr": ColumnRole.store,
    "family": ColumnRole.family,
    "sales": ColumnRole.target,
    "onpromotion": ColumnRole.covariate,
}


@attr.s(frozen=True, order=True)
class EntityKey:
    """One (store, family) series key."""

    store_id = attr.ib(type=int)
    family = attr.ib(type=str)

    def __str__(self):
        """Render as ``store/family``."""
        return f"{self.store_id}/{self.family}"


class SplitLabel(StrEnum):
    """Split label of a date range."""

    train = auto()
    hidden = auto()


@attr.s(frozen=True)
class SplitRange:
    """Inclusive date range carrying one split label."""

    start = attr.ib(type=datetime.date)
    end = attr.ib(type=datetime.date)
    label = attr.ib(type=SplitLabel, converter=SplitLabel)


def _to_date(value) -> datetime.date:
    return pd.Timestamp(value).date()


@define(frozen=True, eq=False)
class UnifiedSeriesTable:
    """Normalized (date, entity, target, covariates) rows with an explicit cutoff.

    The frame is kept sorted by (date, store, family) and must not be
    mutated; accessors hand out copies.
    """

    frame: pd.DataFrame
    frequency: Granularity = field(default=Granularity.daily, converter=Granularity)
    timezone: str = "UTC"
    cutoff: Optional[datetime.date] = None
    split_labels: Tuple[SplitRange, ...] = field(factory=tuple, converter=tuple)

    def __attrs_post_init__(self):
        """Check key uniqueness, target sign and split consistency."""
        frame = self.frame
        duplicated = frame.duplicated(KEY_COLUMNS)
        if duplicated.any():
            row = frame[duplicated].iloc[0]
            raise DuplicateKey(EntityKey(int(row[STORE]), row[FAMILY]), _to_date(row[DATE]))
        negative = frame[TARGET] < 0
        if negative.any():
            raise NegativeTarget(int(np.flatnonzero(negative.to_numpy())[0]) + 1)
        for split in self.split_labels:
            if self.cutoff is None:
                raise InconsistentDates("split labels need a cutoff")
            if split.label == SplitLabel.hidden and split.start <= self.cutoff:
                raise InconsistentDates(f"hidden range starts {split.start}, not after cutoff {self.cutoff}")
            if split.label == SplitLabel.train and split.end > self.cutoff:
                raise InconsistentDates(f"train range ends {split.end}, after cutoff {self.cutoff}")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, **kwargs) -> "UnifiedSeriesTable":
        """Build from a frame holding the canonical columns, sorting it."""
        frame = frame.copy()
        frame[DATE] = pd.to_datetime(frame[DATE])
        frame[STORE] = frame[STORE].astype("int64")
        frame[FAMILY] = frame[FAMILY].astype(str)
        frame[TARGET] = frame[TARGET].astype("float64")
        frame = frame.sort_values([DATE, STORE, FAMILY], kind="mergesort").reset_index(drop=True)
        return cls(frame=frame, **kwargs)

    @classmethod
    def from_rows(cls, rows, **kwargs) -> "UnifiedSeriesTable":
        """Build from ``(date, EntityKey, target[, covariates])`` tuples."""
        records = []
        for row in rows:
            date, entity, target = row[:3]
            record = {DATE: date, STORE: entity.store_id, FAMILY: entity.family, TARGET: target}
            if len(row) > 3:
                record.update(row[3])
            records.append(record)
        frame = pd.DataFrame.from_records(records, columns=None if records else [DATE, STORE, FAMILY, TARGET])
        return cls.from_frame(frame, **kwargs)

    def __len__(self) -> int:
        """Return the row count."""
        return len(self.frame)

    @property
    def covariates(self) -> Tuple[str, ...]:
        """Return covariate column names."""
        return tuple(c for c in self.frame.columns if c not in (DATE, STORE, FAMILY, TARGET, ROW_ID))

    @property
    def has_row_ids(self) -> bool:
        """Whether rows carry submission ids."""
        return ROW_ID in self.frame.columns

    def entities(self) -> Tuple[EntityKey, ...]:
        """Return the sorted distinct entity keys."""
        pairs = self.frame[[STORE, FAMILY]].drop_duplicates().sort_values([STORE, FAMILY])
        return tuple(EntityKey(int(store), family) for store, family in pairs.itertuples(index=False))

    def dates(self) -> Tuple[datetime.date, ...]:
        """Return the sorted distinct dates."""
        return tuple(_to_date(value) for value in sorted(self.frame[DATE].unique()))

    def to_frame(self) -> pd.DataFrame:
        """Return a copy of the underlying frame."""
        return self.frame.copy()

    def history(self, cutoff: datetime.date) -> "UnifiedSeriesTable":
        """Return the rows dated on or before ``cutoff``."""
        mask = self.frame[DATE] <= pd.Timestamp(cutoff)
        return attr.evolve(self, frame=self.frame[mask].reset_index(drop=True), cutoff=cutoff, split_labels=())

    def window(self, start: datetime.date, end: datetime.date) -> "UnifiedSeriesTable":
        """Return the rows dated inside ``[start, end]``."""
        dates = self.frame[DATE]
        mask = (dates >= pd.Timestamp(start)) & (dates <= pd.Timestamp(end))
        return attr.evolve(self, frame=self.frame[mask].reset_index(drop=True), split_labels=())

    def with_split(self, cutoff: datetime.date, hidden_end: Optional[datetime.date] = None) -> "UnifiedSeriesTable":
        """Label dates up to ``cutoff`` as train and the rest as hidden."""
        dates = self.dates()
        labels = []
        if dates and dates[0] <= cutoff:
            labels.append(SplitRange(dates[0], min(cutoff, dates[-1]), SplitLabel.train))
        if dates and dates[-1] > cutoff:
            start = cutoff + datetime.timedelta(days=1)
            labels.append(SplitRange(start, hidden_end or dates[-1], SplitLabel.hidden))
        return attr.evolve(self, cutoff=cutoff, split_labels=labels)

    def max_target_by_entity(self) -> Dict[EntityKey, float]:
        """Return the largest observed target per entity."""
        grouped = self.frame.groupby([STORE, FAMILY], sort=True)[TARGET].max()
        return {EntityKey(int(store), family): float(value) for (store, family), value in grouped.items()}

    def equals(self, other: "UnifiedSeriesTable") -> bool:
        """Field-wise equality including frame contents."""
        return (
            self.frequency == other.frequency
            and self.timezone == other.timezone
            and self.cutoff == other.cutoff
            and self.split_labels == other.split_labels
            and self.frame.equals(other.frame)
        )

    def to_csv(self, columns: Optional[Mapping[str, str]] = None) -> bytes:
        """Emit as CSV with Store Sales column names.

        Floats are written in shortest round-trip form.
        """
        names = dict(columns or {ROW_ID: "id", DATE: "date", STORE: "store_nbr", FAMILY: "family", TARGET: "sales"})
        frame = self.frame.copy()
        frame[DATE] = frame[DATE].dt.strftime(DATE_FORMAT)
        ordered = [c for c in (ROW_ID, DATE, STORE, FAMILY, TARGET) if c in frame.columns] + list(self.covariates)
        frame = frame[ordered].rename(columns=names)
        return format_csv(frame)


def format_float(value) -> str:
    """Render a number in shortest round-trip form, empty when missing."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def format_csv(frame: pd.DataFrame) -> bytes:
    """Write ``frame`` as UTF-8 CSV with a stable float format."""
    out = frame.copy()
    for column in out.columns:
        if pd.api.types.is_float_dtype(out[column]):
            out[column] = out[column].map(format_float)
    return out.to_csv(index=False, lineterminator="\n").encode("utf-8")


def read_csv_strings(payload: bytes) -> pd.DataFrame:
    """Read a CSV payload keeping every cell as text."""
    try:
        return pd.read_csv(io.BytesIO(payload), dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise UnreadablePayload(f"payload is not CSV: {e}") from None


def parse_dates(column: pd.Series) -> pd.Series:
    """Parse ``YYYY-MM-DD`` cells, raising on the first bad row."""
    parsed = pd.to_datetime(column, format=DATE_FORMAT, errors="coerce")
    bad = parsed.isna().to_numpy()
    if bad.any():
        raise UnparseableTimestamp(int(np.flatnonzero(bad)[0]) + 1)
    return parsed


def _columns_for(schema: Mapping[str, ColumnRole], header) -> Dict[ColumnRole, str]:
    roles = {}
    for column, role in schema.items():
        role = ColumnRole(role)
        if role in (ColumnRole.covariate, ColumnRole.ignore):
            continue
        if column not in header:
            raise MissingRequiredColumn(column)
        roles[role] = column
    for role in REQUIRED_ROLES:
        if role not in roles:
            raise MissingRequiredColumn(str(role))
    return roles


def ingest_table(
    payload: bytes,
    schema: Mapping[str, ColumnRole] = STORE_SALES_SCHEMA,
    frequency: Granularity = Granularity.daily,
    timezone: str = "UTC",
) -> UnifiedSeriesTable:
    """Normalize a CSV payload into a :class:`UnifiedSeriesTable`.

    Covariate cells that are empty or not numeric are kept as missing.
    """
    raw = read_csv_strings(payload)
    roles = _columns_for(schema, raw.columns)

    frame = pd.DataFrame({DATE: parse_dates(raw[roles[ColumnRole.date]])})

    stores = pd.to_numeric(raw[roles[ColumnRole.store]], errors="coerce")
    families = raw[roles[ColumnRole.family]]
    bad = (stores.isna() | (stores <= 0) | (families.str.len() == 0)).to_numpy()
    if bad.any():
        raise InvalidEntity(int(np.flatnonzero(bad)[0]) + 1)
    frame[STORE] = stores.astype("int64")
    frame[FAMILY] = families

    target = pd.to_numeric(raw[roles[ColumnRole.target]], errors="coerce")
    if target.isna().any():
        raise InvalidTarget(int(np.flatnonzero(target.isna().to_numpy())[0]) + 1)
    if (target < 0).any():
        raise NegativeTarget(int(np.flatnonzero((target < 0).to_numpy())[0]) + 1)
    frame[TARGET] = target.astype("float64")

    if ColumnRole.id in roles:
        frame[ROW_ID] = pd.to_numeric(raw[roles[ColumnRole.id]], errors="coerce").astype("Int64")

    for column, role in schema.items():
        if ColumnRole(role) == ColumnRole.covariate and column in raw.columns:
            frame[column] = pd.to_numeric(raw[column].replace("", np.nan), errors="coerce").astype("float64")

    duplicated = frame.duplicated(KEY_COLUMNS)
    if duplicated.any():
        row = frame[duplicated].iloc[0]
        raise DuplicateKey(EntityKey(int(row[STORE]), row[FAMILY]), _to_date(row[DATE]))

    logger.debug(f"ingested {len(frame)} rows over {frame[[STORE, FAMILY]].drop_duplicates().shape[0]} entities")
    return UnifiedSeriesTable.from_frame(frame, frequency=frequency, timezone=timezone)
