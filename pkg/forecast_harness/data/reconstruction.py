"""Local rebuild of a competition slice with a sealed hidden window."""

import datetime
import hashlib
import logging
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Optional, Tuple

import attr
import pandas as pd

from ..errors import (
    ConservationViolation,
    EmptyHiddenWindow,
    InconsistentDates,
    MissingRawFile,
    MissingRequiredColumn,
    SpecDateOutsideData,
    UnwritableDirectory,
)
from ..task.codec import parse_manifest, parse_task_file, serialize_manifest, serialize_task_file
from ..task.model import (
    AccessScope,
    ConstraintSet,
    FileRole,
    MetricSpec,
    OutputForm,
    PriorKnowledge,
    TaskFile,
    WorkspaceEntry,
    WorkspaceManifest,
)
from .table import (
    STORE_SALES_SCHEMA,
    ColumnRole,
    UnifiedSeriesTable,
    format_csv,
    ingest_table,
    parse_dates,
    read_csv_strings,
)

logger = logging.getLogger(__name__)

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
# raw competition files that must never pass through into the workspace
WITHHELD_FILES = frozenset({TEST_FILE, "sample_submission.csv"})

PUBLIC_DIR = "public"
SEALED_DIR = "sealed"
HIDDEN_TRUTH_FILE = "hidden_truth.csv"
MANIFEST_FILE = "manifest.txt"
TASK_FILE = "task.txt"

DEFAULT_SKELETON_COVARIATES = ("onpromotion",)


def digest(payload: bytes) -> str:
    """Return the hex content digest of ``payload``."""
    return hashlib.sha256(payload).hexdigest()


@attr.s(frozen=True)
class SliceSpec:
    """Which stores, families and dates form the local slice.

    ``families`` of ``None`` keeps every family found in the data.
    """

    store_ids = attr.ib(type=FrozenSet[int], converter=frozenset)
    public_train_end = attr.ib(type=datetime.date)
    hidden_start = attr.ib(type=datetime.date)
    hidden_end = attr.ib(type=datetime.date)
    families = attr.ib(type=Optional[FrozenSet[str]], default=None,
                       converter=attr.converters.optional(frozenset))
    auxiliary_truncation = attr.ib(type=Dict[str, datetime.date], factory=dict, converter=dict)
    auxiliary_full_span = attr.ib(type=FrozenSet[str], factory=frozenset, converter=frozenset)

    def __attrs_post_init__(self):
        """Check the window arithmetic."""
        if self.public_train_end + datetime.timedelta(days=1) != self.hidden_start:
            raise InconsistentDates(
                f"hidden window must start the day after {self.public_train_end}, got {self.hidden_start}",
            )
        if self.hidden_start > self.hidden_end:
            raise InconsistentDates(f"hidden window {self.hidden_start}..{self.hidden_end} is empty")
        if not self.store_ids:
            raise InconsistentDates("slice selects no store")

    @property
    def horizon_days(self) -> int:
        """Return the hidden window length in days."""
        return (self.hidden_end - self.hidden_start).days + 1


@attr.s(frozen=True)
class ReconstructionResult:
    """Public workspace files, sealed truth and manifest of one slice."""

    public_files = attr.ib(type=Dict[str, bytes])
    hidden_truth = attr.ib(type=UnifiedSeriesTable)
    manifest = attr.ib(type=WorkspaceManifest)
    history_start = attr.ib(type=datetime.date)


def _role_columns(schema) -> Dict[ColumnRole, str]:
    return {ColumnRole(role): column for column, role in schema.items()}


def _sorted_slice(raw: pd.DataFrame, mask, dates: pd.Series, stores: pd.Series, family_col: str) -> pd.DataFrame:
    order = pd.DataFrame({"_date": dates[mask], "_store": stores[mask], "_family": raw.loc[mask, family_col]})
    order = order.sort_values(["_date", "_store", "_family"], kind="mergesort")
    return raw.loc[order.index]


def _truncate_by_date(payload: bytes, last: datetime.date, name: str) -> bytes:
    frame = read_csv_strings(payload)
    if "date" not in frame.columns:
        raise MissingRequiredColumn(f"{name}:date")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    kept = frame[dates.notna() & (dates <= pd.Timestamp(last))]
    return format_csv(kept)


def _check_inputs(raw_files: Mapping[str, bytes], spec: SliceSpec):
    if TRAIN_FILE not in raw_files:
        raise MissingRawFile(TRAIN_FILE)
    for name in sorted(set(spec.auxiliary_truncation) | spec.auxiliary_full_span):
        if name not in raw_files:
            raise MissingRawFile(name)


def _next_id(public: pd.DataFrame, id_col: Optional[str]) -> int:
    if id_col is None or public.empty:
        return 0
    ids = pd.to_numeric(public[id_col], errors="coerce").dropna()
    return int(ids.max()) + 1 if not ids.empty else 0


def _check_conservation(sliced: int, public: int, hidden: int, skeleton: int, grid: int):
    if public + hidden != sliced:
        raise ConservationViolation("public plus hidden rows", sliced, public + hidden)
    if skeleton != hidden:
        raise ConservationViolation("test skeleton", hidden, skeleton)
    if hidden != grid:
        raise ConservationViolation("hidden entity-day grid", grid, hidden)


def build_reconstruction(
    raw_files: Mapping[str, bytes],
    spec: SliceSpec,
    schema: Mapping[str, ColumnRole] = STORE_SALES_SCHEMA,
    skeleton_covariates: Tuple[str, ...] = DEFAULT_SKELETON_COVARIATES,
    timezone: str = "UTC",
) -> ReconstructionResult:
    """Cut the raw competition files into public files and a sealed hidden window.

    Test skeleton ids continue after the largest public train id, in
    (date, store, family) order.
    """
    _check_inputs(raw_files, spec)
    columns = _role_columns(schema)
    raw = read_csv_strings(raw_files[TRAIN_FILE])
    for role in (ColumnRole.date, ColumnRole.store, ColumnRole.family, ColumnRole.target):
        if columns.get(role) not in raw.columns:
            raise MissingRequiredColumn(columns.get(role, str(role)))
    date_col, store_col, family_col = columns[ColumnRole.date], columns[ColumnRole.store], columns[ColumnRole.family]
    id_col = columns.get(ColumnRole.id)

    dates = parse_dates(raw[date_col])
    stores = pd.to_numeric(raw[store_col], errors="coerce")
    selected = stores.isin(sorted(spec.store_ids))
    if spec.families is not None:
        selected &= raw[family_col].isin(sorted(spec.families))
    if not selected.any():
        raise SpecDateOutsideData("slice selects no rows")

    first, last = dates[selected].min().date(), dates[selected].max().date()
    if spec.hidden_end > last or spec.public_train_end < first:
        raise SpecDateOutsideData(f"slice {spec.public_train_end}..{spec.hidden_end} outside data {first}..{last}")

    public_mask = selected & (dates <= pd.Timestamp(spec.public_train_end))
    hidden_mask = selected & (dates > pd.Timestamp(spec.public_train_end)) & (dates <= pd.Timestamp(spec.hidden_end))
    if not hidden_mask.any():
        raise EmptyHiddenWindow(f"no rows in {spec.hidden_start}..{spec.hidden_end}")

    public = _sorted_slice(raw, public_mask, dates, stores, family_col)
    hidden = _sorted_slice(raw, hidden_mask, dates, stores, family_col).copy()
    hidden_id_col = id_col or "id"
    start_id = _next_id(public, id_col)
    hidden[hidden_id_col] = [str(i) for i in range(start_id, start_id + len(hidden))]
    truth_schema = dict(schema)
    truth_schema[hidden_id_col] = ColumnRole.id

    hidden_truth = ingest_table(format_csv(hidden), truth_schema, timezone=timezone)
    hidden_truth = hidden_truth.with_split(spec.public_train_end, spec.hidden_end)

    kept = [c for c in skeleton_covariates if c in hidden.columns]
    skeleton = hidden[[hidden_id_col, date_col, store_col, family_col] + kept]
    _check_conservation(
        sliced=int((selected & (dates <= pd.Timestamp(spec.hidden_end))).sum()),
        public=len(public),
        hidden=len(hidden_truth),
        skeleton=len(skeleton),
        grid=len(hidden_truth.entities()) * spec.horizon_days,
    )

    public_files = {TRAIN_FILE: format_csv(public), TEST_FILE: format_csv(skeleton)}
    entries = [
        WorkspaceEntry(TRAIN_FILE, FileRole.train),
        WorkspaceEntry(TEST_FILE, FileRole.test_skeleton),
    ]
    for name, cut in sorted(spec.auxiliary_truncation.items()):
        public_files[name] = _truncate_by_date(raw_files[name], cut, name)
        entries.append(WorkspaceEntry(name, FileRole.auxiliary, availability_end=cut))
    for name in sorted(spec.auxiliary_full_span):
        public_files[name] = raw_files[name]
        entries.append(WorkspaceEntry(name, FileRole.auxiliary))
    for name in sorted(raw_files):
        if name in public_files or name in WITHHELD_FILES:
            continue
        public_files[name] = raw_files[name]
        entries.append(WorkspaceEntry(name, FileRole.metadata))

    entries = [
        attr.evolve(entry, byte_length=len(public_files[entry.file_name]),
                    content_digest=digest(public_files[entry.file_name]))
        for entry in sorted(entries, key=lambda e: e.file_name)
    ]
    manifest = WorkspaceManifest(entries=entries, hidden_rows=len(hidden_truth), skeleton_covariates=kept)
    logger.info(
        f"reconstructed slice: {public_mask.sum()} public rows, {len(hidden_truth)} hidden rows, "
        f"{len(hidden_truth.entities())} entities",
    )
    return ReconstructionResult(
        public_files=public_files,
        hidden_truth=hidden_truth,
        manifest=manifest,
        history_start=first,
    )


def derive_task_file(result: ReconstructionResult, spec: SliceSpec, timezone: str = "America/Guayaquil",
                     max_submissions: Optional[int] = None) -> TaskFile:
    """Write down the task statement implied by a reconstruction."""
    scope = AccessScope(
        history_start=result.history_start,
        history_end=spec.public_train_end,
        horizon_start=spec.hidden_start,
        horizon_end=spec.hidden_end,
        step_count=spec.horizon_days,
        timezone=timezone,
    )
    return TaskFile(
        scope=scope,
        prior=PriorKnowledge(
            domain_tag="retail",
            notes=["grocery sales per store and product family", "weekly seasonality"],
            seasonality_hints=[7],
        ),
        output=OutputForm(
            required_columns=["id", "sales"],
            id_column="id",
            value_column="sales",
            required_row_count=len(result.hidden_truth),
        ),
        constraints=ConstraintSet(
            leakage_boundary=spec.public_train_end,
            max_submissions=max_submissions,
            feature_availability_overrides=spec.auxiliary_truncation,
        ),
        metrics=[MetricSpec("rmsle")],
    )


@attr.s(frozen=True)
class ReconstructionBundle:
    """Everything ``serve`` and ``score`` need, read back from disk."""

    task = attr.ib(type=TaskFile)
    manifest = attr.ib(type=WorkspaceManifest)
    public_files = attr.ib(type=Dict[str, bytes])
    hidden_truth = attr.ib(type=UnifiedSeriesTable)


def write_reconstruction(result: ReconstructionResult, task: TaskFile, out_dir: Path) -> Path:
    """Write public files, sealed truth, manifest and task file; return the manifest path."""
    out_dir = Path(out_dir)
    try:
        (out_dir / PUBLIC_DIR).mkdir(parents=True, exist_ok=True)
        (out_dir / SEALED_DIR).mkdir(parents=True, exist_ok=True)
        for name, payload in sorted(result.public_files.items()):
            (out_dir / PUBLIC_DIR / name).write_bytes(payload)
        (out_dir / SEALED_DIR / HIDDEN_TRUTH_FILE).write_bytes(result.hidden_truth.to_csv())
        manifest_path = out_dir / MANIFEST_FILE
        manifest_path.write_text(serialize_manifest(result.manifest), encoding="utf-8")
        (out_dir / TASK_FILE).write_text(serialize_task_file(task), encoding="utf-8")
    except OSError as e:
        raise UnwritableDirectory(f"{out_dir}: {e}") from None
    return manifest_path


def read_hidden_truth(path: Path, cutoff: Optional[datetime.date] = None) -> UnifiedSeriesTable:
    """Load a sealed truth file."""
    table = ingest_table(Path(path).read_bytes(), STORE_SALES_SCHEMA)
    return table.with_split(cutoff) if cutoff is not None else table


def load_reconstruction(out_dir: Path) -> ReconstructionBundle:
    """Read back a reconstruction written by :func:`write_reconstruction`."""
    out_dir = Path(out_dir)
    task = parse_task_file((out_dir / TASK_FILE).read_text(encoding="utf-8"))
    manifest = parse_manifest((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
    public_files = {entry.file_name: (out_dir / PUBLIC_DIR / entry.file_name).read_bytes()
                    for entry in manifest.entries}
    truth = read_hidden_truth(out_dir / SEALED_DIR / HIDDEN_TRUTH_FILE, task.scope.history_end)
    return ReconstructionBundle(task=task, manifest=manifest, public_files=public_files, hidden_truth=truth)
