#!/usr/bin/python
# -*- coding: utf-8 -*-
"""Memory record types.

Every record serializes to sorted, indented JSON text; its digest is the
SHA-256 of that text, so freshness checks reduce to digest equality.
"""

import hashlib
import json
from enum import auto
from typing import Dict, Iterable, Optional, Tuple

import attr
from strenum import StrEnum


def _tuples(value) -> Tuple[tuple, ...]:
    return tuple(tuple(item) for item in value)


def _records(cls):

    def convert(items):
        return tuple(item if isinstance(item, cls) else cls(**item) for item in items)

    return convert


class MemoryRecord:
    """Mixin giving attrs records their text form and digest."""

    NAME = ""

    def to_dict(self) -> dict:
        """Return a JSON-ready dict."""
        return attr.asdict(self, recurse=True)

    @classmethod
    def from_dict(cls, data: dict):
        """Build from :meth:`to_dict` output."""
        return cls(**data)

    def to_text(self) -> str:
        """Render as the on-disk document."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str):
        """Parse an on-disk document."""
        return cls.from_dict(json.loads(text))

    @property
    def digest(self) -> str:
        """Return the content hash of the serialized record."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def statements(self) -> Iterable[str]:
        """Return the entries a duplicate proposal is compared against."""
        return ()


@attr.s(frozen=True)
class InitialPromptAnchor(MemoryRecord):
    """The original task statement; only clarifications ever grow."""

    NAME = "anchor"
    FROZEN_FIELDS = ("original_prompt", "goals", "metrics", "non_goals")

    original_prompt = attr.ib(type=str)
    goals = attr.ib(type=Tuple[str, ...], converter=tuple)
    metrics = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    non_goals = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    clarifications = attr.ib(type=Tuple[Tuple[str, str], ...], factory=tuple, converter=_tuples)

    def statements(self):
        """Goals and clarification texts."""
        return self.goals + tuple(text for _, text in self.clarifications)


@attr.s(frozen=True)
class ProgressLedger(MemoryRecord):
    """Current focus and what this round finished."""

    NAME = "progress"

    current_focus = attr.ib(type=str, default="")
    completed_this_round = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    suggested_next = attr.ib(type=Tuple[Tuple[str, str], ...], factory=tuple, converter=_tuples)

    def __attrs_post_init__(self):
        """Every suggestion cites evidence."""
        for action, evidence in self.suggested_next:
            if not evidence.strip():
                raise ValueError(f"suggested action {action!r} carries no evidence")

    def statements(self):
        """Completed items and suggested actions."""
        return self.completed_this_round + tuple(action for action, _ in self.suggested_next)


@attr.s(frozen=True)
class FeatureLedger(MemoryRecord):
    """Delivered features with evidence and planned ones with blockers."""

    NAME = "features"

    delivered = attr.ib(type=Tuple[Tuple[str, str], ...], factory=tuple, converter=_tuples)
    planned = attr.ib(type=Tuple[Tuple[str, str, str], ...], factory=tuple, converter=_tuples)

    def __attrs_post_init__(self):
        """A feature is either delivered or planned."""
        both = {f for f, _ in self.delivered} & {f for f, _, _ in self.planned}
        if both:
            raise ValueError(f"features both delivered and planned: {', '.join(sorted(both))}")

    def statements(self):
        """Feature names."""
        return tuple(f for f, _ in self.delivered) + tuple(f for f, _, _ in self.planned)


@attr.s(frozen=True)
class AlignmentEntry:
    """Where one strategy branch stands against the plan."""

    branch_id = attr.ib(type=str)
    wave = attr.ib(type=int)
    comparison_point = attr.ib(type=str)
    status = attr.ib(type=str)
    action_item = attr.ib(type=str, default="")


@attr.s(frozen=True)
class DecisionLedger(MemoryRecord):
    """Decisions in force, deferred decisions and the branch alignment map."""

    NAME = "decisions"

    decisions = attr.ib(type=Tuple[Tuple[str, str, str], ...], factory=tuple, converter=_tuples)
    deferred = attr.ib(type=Tuple[Tuple[str, str], ...], factory=tuple, converter=_tuples)
    alignment = attr.ib(type=Tuple[AlignmentEntry, ...], factory=tuple, converter=_records(AlignmentEntry))

    def __attrs_post_init__(self):
        """Every decision has a reason."""
        for decision, reason, _ in self.decisions:
            if not reason.strip():
                raise ValueError(f"decision {decision!r} has no reason")

    def statements(self):
        """Decision texts."""
        return tuple(d for d, _, _ in self.decisions) + tuple(d for d, _ in self.deferred)


@attr.s(frozen=True)
class RelationMap(MemoryRecord):
    """Edges between roles and skills."""

    NAME = "relations"

    edges = attr.ib(type=Tuple[Tuple[str, str, str], ...], factory=tuple, converter=_tuples)

    def statements(self):
        """Edges rendered as ``source -> target: label``."""
        return tuple(f"{a} -> {b}: {label}" for a, b, label in self.edges)


class Polarity(StrEnum):
    """Whether a prior recommends or warns."""

    positive = auto()
    negative = auto()


@attr.s(frozen=True)
class PriorEntry:
    """A reusable lesson, always bounded by its scope."""

    polarity = attr.ib(type=Polarity, converter=Polarity)
    statement = attr.ib(type=str)
    scope_and_limits = attr.ib(type=str)
    evidence = attr.ib(type=str, default="")

    @scope_and_limits.validator
    def _check_scope(self, attribute, value):
        if not value.strip():
            raise ValueError("a prior without scope and limits is rejected")


@attr.s(frozen=True)
class PriorLedger(MemoryRecord):
    """Positive and negative priors."""

    NAME = "priors"

    entries = attr.ib(type=Tuple[PriorEntry, ...], factory=tuple, converter=_records(PriorEntry))

    def statements(self):
        """Prior statements."""
        return tuple(entry.statement for entry in self.entries)


@attr.s(frozen=True)
class TraceEntry:
    """One round of the task trace."""

    goal = attr.ib(type=str)
    self_review = attr.ib(type=str)
    change_scope = attr.ib(type=str)
    verification = attr.ib(type=str)
    follow_up = attr.ib(type=str, default="")


@attr.s(frozen=True)
class TraceRecord(MemoryRecord):
    """Per-round goal, review, scope, verification and follow-up."""

    NAME = "trace"

    rounds = attr.ib(type=Tuple[TraceEntry, ...], factory=tuple, converter=_records(TraceEntry))

    def statements(self):
        """Round goals."""
        return tuple(entry.goal for entry in self.rounds)


class Freshness(StrEnum):
    """Snapshot freshness."""

    fresh = auto()
    stale = auto()


class CompletionState(StrEnum):
    """Whether the task is done."""

    incomplete = auto()
    complete = auto()


class CheckStatus(StrEnum):
    """Status of one pre-stop check."""

    passed = auto()
    pending = auto()
    failed = auto()


PRE_STOP_CHECKS = ("brainstorm", "deep_reasoning", "critic_loop", "temporal_governor", "final_reviewer")
SNAPSHOT_SOURCES = ("anchor", "progress", "decisions", "alignment", "gate", "blockers")


@attr.s(frozen=True)
class ContextSnapshot(MemoryRecord):
    """Compacted run state bound to the digests of its sources."""

    NAME = "snapshot"

    current_phase = attr.ib(type=str)
    task_anchors = attr.ib(type=Tuple[str, ...], converter=tuple)
    active_blockers = attr.ib(type=Tuple[str, ...], converter=tuple)
    forbidden_actions = attr.ib(type=Tuple[str, ...], converter=tuple)
    decisions_in_force = attr.ib(type=Tuple[str, ...], converter=tuple)
    verified_evidence = attr.ib(type=Tuple[str, ...], converter=tuple)
    next_dispatch_focus = attr.ib(type=str)
    ignorable_history = attr.ib(type=Tuple[str, ...], converter=tuple)
    derived_from_digests = attr.ib(type=Dict[str, str], converter=lambda d: dict(sorted(dict(d).items())))
    refreshed_at = attr.ib(type=str)

    def __attrs_post_init__(self):
        """The digest map names exactly the six sources."""
        if set(self.derived_from_digests) != set(SNAPSHOT_SOURCES):
            raise ValueError(f"snapshot digests must cover {', '.join(SNAPSHOT_SOURCES)}")


@attr.s(frozen=True)
class Housekeeping:
    """Workspace cleanup status."""

    cleanup_done = attr.ib(type=Optional[bool])
    removed = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    kept_with_reason = attr.ib(type=Tuple[Tuple[str, str], ...], factory=tuple, converter=_tuples)


def _housekeeping(value):
    if value is None or isinstance(value, Housekeeping):
        return value
    return Housekeeping(**value)


@attr.s(frozen=True)
class CompletionGateRecord(MemoryRecord):
    """The checklist whose conjunctive pass grants stop permission.

    Fields are optional so a partly filled record can be stored; the gate
    refuses to evaluate it until every field is set.
    """

    NAME = "gate"

    pre_stop_checks = attr.ib(type=Optional[Dict[str, CheckStatus]], default=None,
                              converter=attr.converters.optional(lambda d: {k: CheckStatus(v) for k, v in d.items()}))
    initial_prompt_drift = attr.ib(type=Optional[str], default=None)
    snapshot_freshness = attr.ib(type=Optional[Freshness], default=None,
                                 converter=attr.converters.optional(Freshness))
    role_challenges = attr.ib(type=Optional[Tuple[Tuple[str, bool, str], ...]], default=None,
                              converter=attr.converters.optional(_tuples))
    remaining_action_count = attr.ib(type=Optional[int], default=None)
    completion_state = attr.ib(type=Optional[CompletionState], default=None,
                               converter=attr.converters.optional(CompletionState))
    stop_permission = attr.ib(type=bool, default=False)
    reason = attr.ib(type=str, default="")
    housekeeping = attr.ib(type=Optional[Housekeeping], default=None, converter=_housekeeping)

    def statements(self):
        """The recorded reason."""
        return (self.reason,) if self.reason else ()


RECORD_TYPES = {
    cls.NAME: cls
    for cls in (
        InitialPromptAnchor,
        ProgressLedger,
        FeatureLedger,
        DecisionLedger,
        RelationMap,
        ContextSnapshot,
        CompletionGateRecord,
        TraceRecord,
        PriorLedger,
    )
}
