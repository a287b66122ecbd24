#!/usr/bin/python
# -*- coding: utf-8 -*-
"""Append-only runtime event log and its replay.

One event per line, six tab-separated fields in a fixed order::

    type  source  task_id  timestamp  summary  artifacts

Timestamps are UTC with microseconds. The summary is a ``key=value; ...``
list whose values are percent-escaped, so neither tabs nor newlines ever
reach the file.
"""

import datetime
import functools
import logging
import threading
from enum import auto
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple
from urllib.parse import quote, unquote

import attr
from pyee import EventEmitter
from strenum import StrEnum

from ..errors import CorruptRecord, NonMonotoneTimestamp
from .lifecycle import completion_is_grounded
from .records import EventType, LifecycleStage, SignalKind
from .roles import RoleId

logger = logging.getLogger(__name__)

EVENT_LOG_FILE = "events.log"
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S.%fZ"
FIELD_COUNT = 6
DETAIL_SEPARATOR = "; "
ARTIFACT_SEPARATOR = ","
_SAFE = " /:.-_()+"


class EventLogEvents(StrEnum):
    """Events emitted to in-process listeners."""

    appended = auto()


def format_timestamp(value: datetime.datetime) -> str:
    """Render a timestamp in UTC to the microsecond."""
    if value.tzinfo is None:
        raise ValueError("event timestamps must be timezone aware")
    return value.astimezone(datetime.timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str) -> datetime.datetime:
    """Parse a timestamp written by :func:`format_timestamp`."""
    return datetime.datetime.strptime(text, TIMESTAMP_FORMAT).replace(tzinfo=datetime.timezone.utc)


def encode_details(details: Mapping[str, object]) -> str:
    """Encode a flat mapping as the summary field."""
    parts = []
    for key, value in details.items():
        if not key or not key.replace("_", "").isalnum():
            raise ValueError(f"detail keys must be identifiers, got {key!r}")
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, (list, tuple, set, frozenset)):
            value = ",".join(str(v) for v in value)
        parts.append(f"{key}={quote(str(value), safe=_SAFE + ',')}")
    return DETAIL_SEPARATOR.join(parts)


def decode_details(summary: str) -> Dict[str, str]:
    """Decode the summary field back into a mapping."""
    details = {}
    if not summary:
        return details
    for part in summary.split(DETAIL_SEPARATOR):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"summary part {part!r} has no '='")
        details[key] = unquote(value)
    return details


def _split(value: str) -> Tuple[str, ...]:
    return tuple(v for v in value.split(",") if v) if value else ()


@attr.s(frozen=True)
class RuntimeEvent:
    """One immutable protocol event."""

    event_type = attr.ib(type=EventType, converter=EventType)
    source = attr.ib(type=RoleId)
    task_id = attr.ib(type=str)
    timestamp = attr.ib(type=datetime.datetime)
    summary = attr.ib(type=str, default="")
    affected_artifacts = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)

    @classmethod
    def create(cls, event_type: EventType, source: RoleId, task_id: str, details: Optional[Mapping] = None,
               artifacts: Iterable[str] = (), timestamp: Optional[datetime.datetime] = None) -> "RuntimeEvent":
        """Build an event stamped now unless ``timestamp`` is given."""
        return cls(
            event_type=event_type,
            source=source,
            task_id=task_id,
            timestamp=timestamp or datetime.datetime.now(datetime.timezone.utc),
            summary=encode_details(details or {}),
            affected_artifacts=tuple(artifacts),
        )

    @property
    def details(self) -> Dict[str, str]:
        """Return the decoded summary."""
        return decode_details(self.summary)

    def to_line(self) -> str:
        """Encode as one log line without the newline."""
        artifacts = ARTIFACT_SEPARATOR.join(quote(a, safe="/._-") for a in self.affected_artifacts)
        return "\t".join([
            str(self.event_type),
            str(self.source),
            quote(self.task_id, safe="/._-"),
            format_timestamp(self.timestamp),
            self.summary,
            artifacts,
        ])

    @classmethod
    def from_line(cls, line: str, number: int = 0) -> "RuntimeEvent":
        """Decode one log line; ``number`` is reported on failure."""
        fields = line.rstrip("\n").split("\t")
        if len(fields) != FIELD_COUNT:
            raise CorruptRecord(number, f"expected {FIELD_COUNT} fields, got {len(fields)}")
        event_type, source, task_id, timestamp, summary, artifacts = fields
        try:
            event = cls(
                event_type=EventType(event_type),
                source=RoleId(source),
                task_id=unquote(task_id),
                timestamp=parse_timestamp(timestamp),
                summary=summary,
                affected_artifacts=[unquote(a) for a in artifacts.split(ARTIFACT_SEPARATOR) if a],
            )
            decode_details(summary)
        except ValueError as e:
            raise CorruptRecord(number, str(e)) from None
        return event


class EventLog:
    """Single-writer append-only event file with in-process fan-out."""

    def __init__(self, path: Path, emitter: Optional[EventEmitter] = None):
        """Open the log at ``path``, continuing after any existing events."""
        self.path = Path(path)
        self.events = emitter or EventEmitter()
        self._lock = threading.Lock()
        self._last: Optional[datetime.datetime] = None
        self._count = 0
        if self.path.exists():
            existing = read_events(self.path)
            self._count = len(existing)
            if existing:
                self._last = existing[-1].timestamp

    def __len__(self) -> int:
        """Return the number of events in the log."""
        return self._count

    def append(self, event: RuntimeEvent) -> RuntimeEvent:
        """Append ``event``; timestamps must not go backwards."""
        with self._lock:
            if self._last is not None and event.timestamp < self._last:
                raise NonMonotoneTimestamp(
                    f"{format_timestamp(event.timestamp)} earlier than {format_timestamp(self._last)}",
                )
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(event.to_line() + "\n")
            self._last = event.timestamp
            self._count += 1
        logger.debug(f"event {event.event_type} from {event.source}: {event.summary}")
        self.events.emit(EventLogEvents.appended, event)
        return event

    def log(self, event_type: EventType, source: RoleId, task_id: str, details: Optional[Mapping] = None,
            artifacts: Iterable[str] = ()) -> RuntimeEvent:
        """Stamp and append an event, keeping the stamp monotone."""
        event = RuntimeEvent.create(event_type, source, task_id, details, artifacts)
        with self._lock:
            last = self._last
        if last is not None and event.timestamp < last:
            event = attr.evolve(event, timestamp=last)
        return self.append(event)


def log_event(log: EventLog, event: RuntimeEvent) -> EventLog:
    """Append ``event`` to ``log`` and return the log."""
    log.append(event)
    return log


def read_events(path: Path) -> List[RuntimeEvent]:
    """Decode every line of an event file."""
    events = []
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.endswith("\n"):
                raise CorruptRecord(number, "truncated line")
            events.append(RuntimeEvent.from_line(line, number))
    return events


@attr.s(frozen=True)
class ProtocolState:
    """Protocol facts reconstructed from an event sequence."""

    open_dispatches: FrozenSet[str] = attr.ib(factory=frozenset, converter=frozenset)
    closed_dispatches: Tuple[str, ...] = attr.ib(factory=tuple, converter=tuple)
    open_issues: FrozenSet[str] = attr.ib(factory=frozenset, converter=frozenset)
    closed_issues: FrozenSet[str] = attr.ib(factory=frozenset, converter=frozenset)
    open_blockers: FrozenSet[str] = attr.ib(factory=frozenset, converter=frozenset)
    review_blocks: int = attr.ib(default=0)
    critique_rounds: int = attr.ib(default=0)
    last_signal: Optional[str] = attr.ib(default=None)
    stop_permission: bool = attr.ib(default=False)
    stopped: bool = attr.ib(default=False)
    compactions: int = attr.ib(default=0)
    checkpoints: Tuple[str, ...] = attr.ib(factory=tuple, converter=tuple)
    touched_artifacts: FrozenSet[str] = attr.ib(factory=frozenset, converter=frozenset)
    lifecycle_violations: Tuple[str, ...] = attr.ib(factory=tuple, converter=tuple)
    weakening_violations: Tuple[str, ...] = attr.ib(factory=tuple, converter=tuple)
    event_count: int = attr.ib(default=0)
    last_timestamp: Optional[datetime.datetime] = attr.ib(default=None)

    def to_text(self) -> str:
        """Render as sorted key/value lines."""
        stamp = format_timestamp(self.last_timestamp) if self.last_timestamp else "-"
        rows = [
            ("events", self.event_count),
            ("last_timestamp", stamp),
            ("open_dispatches", ",".join(sorted(self.open_dispatches)) or "-"),
            ("closed_dispatches", len(self.closed_dispatches)),
            ("open_issues", ",".join(sorted(self.open_issues)) or "-"),
            ("closed_issues", ",".join(sorted(self.closed_issues)) or "-"),
            ("open_blockers", ",".join(sorted(self.open_blockers)) or "-"),
            ("review_blocks", self.review_blocks),
            ("critique_rounds", self.critique_rounds),
            ("last_signal", self.last_signal or "-"),
            ("stop_permission", str(self.stop_permission).lower()),
            ("stopped", str(self.stopped).lower()),
            ("compactions", self.compactions),
            ("checkpoints", ",".join(self.checkpoints) or "-"),
            ("touched_artifacts", len(self.touched_artifacts)),
            ("lifecycle_violations", len(self.lifecycle_violations)),
            ("weakening_violations", len(self.weakening_violations)),
        ]
        return "".join(f"{key} = {value}\n" for key, value in rows)


def _on_dispatch(state: ProtocolState, details) -> dict:
    return {"open_dispatches": state.open_dispatches | {details.get("dispatch", "")}}


def _on_reportback(state: ProtocolState, details) -> dict:
    dispatch = details.get("dispatch", "")
    changes = {
        "open_dispatches": state.open_dispatches - {dispatch},
        "closed_dispatches": state.closed_dispatches + (dispatch,),
        "open_blockers": (state.open_blockers | set(_split(details.get("blockers", "")))) - state.closed_issues,
    }
    stages = [LifecycleStage(s) for s in details.get("stages", "").split(">") if s]
    if stages and not completion_is_grounded(stages):
        changes["lifecycle_violations"] = state.lifecycle_violations + (dispatch,)
    return changes


def _on_rebuttal_opening(state: ProtocolState, details) -> dict:
    issues = set(_split(details.get("issues", "")))
    return {"open_issues": state.open_issues | issues, "review_blocks": state.review_blocks + 1}


def _on_rebuttal_review(state: ProtocolState, details) -> dict:
    issue = details.get("issue", "")
    changes = {"critique_rounds": state.critique_rounds + 1}
    if details.get("resolved") == "true":
        changes.update(
            open_issues=state.open_issues - {issue},
            closed_issues=state.closed_issues | {issue},
            open_blockers=state.open_blockers - {issue},
        )
    return changes


def _on_signal(state: ProtocolState, details) -> dict:
    kind = details.get("kind")
    changes = {"last_signal": kind}
    if kind == SignalKind.allow_stop:
        changes["stopped"] = True
        if state.open_issues or state.open_blockers or not state.stop_permission:
            blockers = sorted(state.open_issues | state.open_blockers)
            changes["weakening_violations"] = state.weakening_violations + (",".join(blockers) or "no-permission",)
    return changes


def _on_gate(state: ProtocolState, details) -> dict:
    return {"stop_permission": details.get("stop_permission") == "true"}


def _on_compaction(state: ProtocolState, details) -> dict:
    return {"compactions": state.compactions + 1}


def _on_checkpoint(state: ProtocolState, details) -> dict:
    return {"checkpoints": state.checkpoints + (details.get("checkpoint", ""),)}


_HANDLERS = {
    EventType.dispatch_creation: _on_dispatch,
    EventType.reportback_receipt: _on_reportback,
    EventType.rebuttal_opening: _on_rebuttal_opening,
    EventType.rebuttal_review: _on_rebuttal_review,
    EventType.stop_go_signal: _on_signal,
    EventType.completion_gate_update: _on_gate,
    EventType.context_compaction: _on_compaction,
    EventType.checkpoint_creation: _on_checkpoint,
}


def apply_event(state: ProtocolState, event: RuntimeEvent) -> ProtocolState:
    """Fold one event into ``state``."""
    if state.last_timestamp is not None and event.timestamp < state.last_timestamp:
        raise NonMonotoneTimestamp(
            f"{format_timestamp(event.timestamp)} earlier than {format_timestamp(state.last_timestamp)}",
        )
    handler = _HANDLERS.get(event.event_type)
    changes = handler(state, event.details) if handler else {}
    return attr.evolve(
        state,
        touched_artifacts=state.touched_artifacts | set(event.affected_artifacts),
        event_count=state.event_count + 1,
        last_timestamp=event.timestamp,
        **changes,
    )


def replay(events: Iterable[RuntimeEvent], initial: Optional[ProtocolState] = None) -> ProtocolState:
    """Left fold of ``events`` starting from ``initial``."""
    return functools.reduce(apply_event, events, initial or ProtocolState())


def replay_file(path: Path) -> ProtocolState:
    """Replay an event file from disk."""
    return replay(read_events(path))
