"""Visual summary of a unified table: figures plus a machine-readable digest."""

import datetime
import json
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import attr
import pandas as pd

from ..errors import EmptyTable, UnwritableDirectory
from ..figures import render_lines
from .table import DATE, FAMILY, STORE, TARGET, UnifiedSeriesTable

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
EXTRACTS_FILE = "series_extracts.csv"
AGGREGATE_FIGURE = "aggregate_series.png"

TOP_VARIANCE_COUNT = 5
EXTRACT_LENGTH = 14  # trailing observations kept per extracted entity


@attr.s(frozen=True)
class MissingSpan:
    """Contiguous run of dates an entity has no row for."""

    entity = attr.ib(type=str)
    start = attr.ib(type=datetime.date)
    end = attr.ib(type=datetime.date)


@attr.s(frozen=True)
class SummaryArtifact:
    """What a visual summary produced."""

    entity_count = attr.ib(type=int)
    date_span = attr.ib(type=Tuple[datetime.date, datetime.date])
    missing_spans = attr.ib(type=Tuple[MissingSpan, ...], converter=tuple)
    top_variance_entities = attr.ib(type=Tuple[str, ...], converter=tuple)
    figures = attr.ib(type=Tuple[Path, ...], converter=tuple)
    summary_path = attr.ib(type=Path)
    extracts_path = attr.ib(type=Path)

    @property
    def figure_count(self) -> int:
        """Return the number of rendered figures."""
        return len(self.figures)


def _spans(entity: str, missing: List[pd.Timestamp]) -> List[MissingSpan]:
    spans = []
    start = previous = None
    for stamp in missing:
        if previous is not None and stamp - previous == pd.Timedelta(days=1):
            previous = stamp
            continue
        if start is not None:
            spans.append(MissingSpan(entity, start.date(), previous.date()))
        start = previous = stamp
    if start is not None:
        spans.append(MissingSpan(entity, start.date(), previous.date()))
    return spans


def missing_spans(table: UnifiedSeriesTable) -> List[MissingSpan]:
    """List the date gaps inside each entity's observed range."""
    spans = []
    for (store, family), group in table.frame.groupby([STORE, FAMILY], sort=True):
        observed = pd.DatetimeIndex(group[DATE])
        expected = pd.date_range(observed.min(), observed.max(), freq="D")
        gaps = expected.difference(observed)
        spans.extend(_spans(f"{store}/{family}", list(gaps)))
    return spans


def _top_variance(table: UnifiedSeriesTable) -> List[str]:
    variance = table.frame.groupby([STORE, FAMILY], sort=True)[TARGET].var(ddof=0).fillna(0.0)
    ranked = sorted(variance.items(), key=lambda item: (-item[1], item[0]))
    return [f"{store}/{family}" for (store, family), _ in ranked[:TOP_VARIANCE_COUNT]]


def visual_summary(table: UnifiedSeriesTable, out_dir: Path) -> SummaryArtifact:
    """Render the aggregate series figure and write the summary files."""
    if len(table) == 0:
        raise EmptyTable("cannot summarise an empty table")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UnwritableDirectory(f"{out_dir}: {e}") from None

    frame = table.frame
    dates = table.dates()
    entities = table.entities()
    gaps = missing_spans(table)
    top = _top_variance(table)

    aggregate = frame.groupby(DATE, sort=True)[TARGET].sum()
    extract_frames = []
    for label in top:
        store, family = label.split("/", 1)
        series = frame[(frame[STORE] == int(store)) & (frame[FAMILY] == family)].tail(EXTRACT_LENGTH)
        extract_frames.append(series[[DATE, STORE, FAMILY, TARGET]])

    summary: Dict[str, object] = {
        "entity_count": len(entities),
        "date_span": [dates[0].isoformat(), dates[-1].isoformat()],
        "row_count": len(table),
        "missing_spans": [[span.entity, span.start.isoformat(), span.end.isoformat()] for span in gaps],
        "top_variance_entities": top,
        "figures": [AGGREGATE_FIGURE],
    }
    try:
        figure = render_lines(
            out_dir / AGGREGATE_FIGURE,
            {"total": (aggregate.index, aggregate.to_numpy())},
            title=f"Aggregate target, {dates[0]} to {dates[-1]}",
            ylabel="target",
        )
        extracts = pd.concat(extract_frames) if extract_frames else frame.head(0)[[DATE, STORE, FAMILY, TARGET]]
        extracts = extracts.assign(**{DATE: extracts[DATE].dt.strftime("%Y-%m-%d")})
        extracts_path = out_dir / EXTRACTS_FILE
        extracts.to_csv(extracts_path, index=False, lineterminator="\n")
        summary_path = out_dir / SUMMARY_FILE
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise UnwritableDirectory(f"{out_dir}: {e}") from None

    logger.info(f"summary: {len(entities)} entities, {dates[0]}..{dates[-1]}, {len(gaps)} missing spans")
    return SummaryArtifact(
        entity_count=len(entities),
        date_span=(dates[0], dates[-1]),
        missing_spans=gaps,
        top_variance_entities=top,
        figures=[figure],
        summary_path=summary_path,
        extracts_path=extracts_path,
    )
