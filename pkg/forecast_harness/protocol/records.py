#!/usr/bin/python
# -*- coding: utf-8 -*-
"""Protocol records exchanged between roles."""

import datetime
from enum import auto
from typing import Dict, FrozenSet, Optional, Tuple

import attr
from strenum import StrEnum

from .roles import RoleId


def _not_none(instance, attribute, value):
    if value is None:
        raise ValueError(f"{type(instance).__name__}.{attribute.name} must be populated")


def _non_empty(instance, attribute, value):
    if not value:
        raise ValueError(f"{type(instance).__name__}.{attribute.name} must not be empty")


class ContextMode(StrEnum):
    """How much run context a dispatch carries."""

    full = auto()
    compacted = auto()


class Autonomy(StrEnum):
    """Whether a role may reframe its objective."""

    may_reframe = auto()
    execute_only = auto()


class ActionKind(StrEnum):
    """Artifact areas a role may write to, plus the submit action."""

    figures = auto()
    submissions = auto()
    memory = auto()
    rebuttals = auto()
    report = auto()
    submit = auto()


@attr.s(frozen=True)
class DispatchPacket:
    """The handoff bounding one role invocation."""

    objective = attr.ib(type=str, validator=_non_empty)
    known_inputs = attr.ib(type=Tuple[str, ...], converter=tuple, validator=_not_none)
    context_mode = attr.ib(type=ContextMode, converter=ContextMode)
    explicit_focus = attr.ib(type=str, validator=_not_none)
    required_reads = attr.ib(type=Tuple[str, ...], converter=tuple, validator=_not_none)
    permitted_action_scope = attr.ib(type=FrozenSet[ActionKind],
                                     converter=lambda kinds: frozenset(ActionKind(k) for k in kinds))
    constraints = attr.ib(type=Tuple[str, ...], converter=tuple, validator=_not_none)
    autonomy_settings = attr.ib(type=Autonomy, converter=Autonomy)
    output_requirements = attr.ib(type=str, validator=_not_none)
    blocking_context = attr.ib(type=Tuple[str, ...], converter=tuple, validator=_not_none)

    def permits(self, kind: ActionKind) -> bool:
        """Whether ``kind`` lies inside the action scope."""
        return ActionKind(kind) in self.permitted_action_scope


class LifecycleStage(StrEnum):
    """Stages of one role's work slice."""

    assignment = auto()
    context_alignment = auto()
    input_validation = auto()
    execution = auto()
    self_review = auto()
    report_preparation = auto()
    completion = auto()
    blockage = auto()


@attr.s(frozen=True)
class LifecycleState:
    """Current stage with the reason it was entered."""

    state = attr.ib(type=LifecycleStage, converter=LifecycleStage)
    entered_at = attr.ib(type=datetime.datetime)
    transition_reason = attr.ib(type=str)
    expected_next = attr.ib(type=FrozenSet[LifecycleStage], converter=frozenset)
    history = attr.ib(type=Tuple[LifecycleStage, ...], factory=tuple, converter=tuple)


class ProposalKind(StrEnum):
    """Kinds of memory update a role may suggest."""

    positive_candidate = auto()
    negative_candidate = auto()
    relation_candidate = auto()
    decision_candidate = auto()
    context_snapshot_candidate = auto()
    trace_event_candidate = auto()
    runtime_event_candidate = auto()


@attr.s(frozen=True)
class MemorySyncProposal:
    """A suggested memory update; the orchestrator decides whether to absorb it."""

    kind = attr.ib(type=ProposalKind, converter=ProposalKind)
    content = attr.ib(type=str)
    confidence = attr.ib(type=Optional[float])
    reason = attr.ib(type=str)
    proposer = attr.ib(type=RoleId)
    scope_and_limits = attr.ib(type=str, default="")
    evidence = attr.ib(type=str, default="")


@attr.s(frozen=True)
class Reportback:
    """What a role hands back at the end of a work slice."""

    status = attr.ib(type=LifecycleStage, converter=LifecycleStage)
    completed_work = attr.ib(type=str)
    remaining_gaps = attr.ib(type=Tuple[str, ...], converter=tuple)
    new_risks = attr.ib(type=Tuple[str, ...], converter=tuple)
    suggested_memory_updates = attr.ib(type=Tuple[MemorySyncProposal, ...], converter=tuple)
    suggested_rule_or_protocol_updates = attr.ib(type=Tuple[str, ...], converter=tuple)
    suggested_next_step = attr.ib(type=str)
    suggested_next_role = attr.ib(type=RoleId)
    follow_up_actions = attr.ib(type=Tuple[str, ...], converter=tuple)
    can_continue_alone = attr.ib(type=bool)
    self_critique = attr.ib(type=str)
    why_stop_not_allowed = attr.ib(type=Optional[str], default=None)
    open_blockers = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    cited_artifacts = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)

    def __attrs_post_init__(self):
        """Every non-final reportback says why stopping is not allowed."""
        if self.status != LifecycleStage.completion and not self.why_stop_not_allowed:
            raise ValueError(f"reportback in {self.status} must say why stopping is not allowed")


class AcceptanceStatus(StrEnum):
    """How a reviewed role answers an issue."""

    accepted = auto()
    contested = auto()


class SignalKind(StrEnum):
    """Completion signal kinds."""

    continue_ = "continue"
    rebuttal_required = auto()
    allow_stop = auto()


@attr.s(frozen=True)
class ReviewIssue:
    """One reviewer objection."""

    issue_id = attr.ib(type=str, validator=_non_empty)
    text = attr.ib(type=str, validator=_non_empty)
    raised_by = attr.ib(type=RoleId)


@attr.s(frozen=True)
class IssueResponse:
    """The reviewed role's answer to one issue."""

    acceptance_status = attr.ib(type=AcceptanceStatus, converter=AcceptanceStatus)
    current_evidence = attr.ib(type=str)
    fix_plan = attr.ib(type=str)
    missing_evidence = attr.ib(type=str, default="")
    remaining_blocker = attr.ib(type=str, default="")
    recheck_requested = attr.ib(type=bool, default=True)


@attr.s(frozen=True)
class RecheckVerdict:
    """A reviewer's ruling after rechecking one issue."""

    resolved = attr.ib(type=bool)
    reason = attr.ib(type=str, validator=_non_empty)
    issued_by = attr.ib(type=RoleId)
    remaining_gap = attr.ib(type=str, default="")
    required_next_change = attr.ib(type=str, default="")
    completion_signal = attr.ib(type=SignalKind, default=SignalKind.continue_, converter=SignalKind)
    follow_up_action = attr.ib(type=str, default="")


@attr.s(frozen=True)
class CompletionSignal:
    """A role's stop or go decision."""

    kind = attr.ib(type=SignalKind, converter=SignalKind)
    reasons = attr.ib(type=str)
    scope = attr.ib(type=str)
    issued_by = attr.ib(type=RoleId)
    next_action = attr.ib(type=Optional[str], default=None)
    completion_checks = attr.ib(type=Dict[str, bool], factory=dict, converter=dict)
    remaining_action_count = attr.ib(type=int, default=0)
    complete_state = attr.ib(type=bool, default=False)

    def __attrs_post_init__(self):
        """Check the kind-specific invariants."""
        if self.remaining_action_count < 0:
            raise ValueError("remaining_action_count must be non-negative")
        if self.kind == SignalKind.allow_stop:
            if self.remaining_action_count != 0 or not self.complete_state or not self.checks_passed:
                raise ValueError("allow_stop needs zero remaining actions, a complete state and passing checks")
        if self.kind == SignalKind.continue_ and not self.next_action and self.checks_passed:
            raise ValueError("continue needs a next action or a failing completion check")

    @property
    def checks_passed(self) -> bool:
        """Whether every completion check is true."""
        return all(self.completion_checks.values())


class EventType(StrEnum):
    """Runtime event types written to the event log."""

    dispatch_creation = auto()
    reportback_receipt = auto()
    rebuttal_opening = auto()
    rebuttal_review = auto()
    stop_go_signal = auto()
    completion_gate_update = auto()
    context_compaction = auto()
    artifact_synchronization = auto()
    repository_initialization = auto()
    checkpoint_creation = auto()
