"""Legal lifecycle transitions of a role's work slice."""

import datetime
from typing import Optional

from ..errors import IllegalTransition
from .records import LifecycleStage, LifecycleState

S = LifecycleStage

# blockage is a side state; resolving it re-enters execution
LEGAL_TRANSITIONS = {
    S.assignment: frozenset({S.context_alignment}),
    S.context_alignment: frozenset({S.input_validation, S.blockage}),
    S.input_validation: frozenset({S.execution, S.blockage}),
    S.execution: frozenset({S.self_review, S.blockage}),
    S.self_review: frozenset({S.report_preparation, S.execution, S.blockage}),
    S.report_preparation: frozenset({S.completion}),
    S.completion: frozenset(),
    S.blockage: frozenset({S.execution}),
}

# the chain a slice walks when nothing blocks it
HAPPY_PATH = (
    S.context_alignment,
    S.input_validation,
    S.execution,
    S.self_review,
    S.report_preparation,
    S.completion,
)


def _now() -> datetime.datetime:
    return datetime.datetime.now(datetime.timezone.utc)


def start_lifecycle(reason: str = "dispatched", at: Optional[datetime.datetime] = None) -> LifecycleState:
    """Return the assignment state of a fresh work slice."""
    return LifecycleState(
        state=S.assignment,
        entered_at=at or _now(),
        transition_reason=reason,
        expected_next=LEGAL_TRANSITIONS[S.assignment],
        history=(S.assignment,),
    )


def transition(current: LifecycleState, to: LifecycleStage, reason: str,
               at: Optional[datetime.datetime] = None) -> LifecycleState:
    """Move to ``to`` if the table allows it."""
    to = LifecycleStage(to)
    if to not in current.expected_next:
        raise IllegalTransition(current.state, to)
    return LifecycleState(
        state=to,
        entered_at=at or _now(),
        transition_reason=reason,
        expected_next=LEGAL_TRANSITIONS[to],
        history=current.history + (to,),
    )


def walk(current: LifecycleState, stages, reason: str) -> LifecycleState:
    """Apply several transitions with one shared reason."""
    for stage in stages:
        current = transition(current, stage, reason)
    return current


def completion_is_grounded(history) -> bool:
    """Whether every completion in ``history`` follows self review and report preparation."""
    seen_review = seen_report = False
    for stage in history:
        stage = LifecycleStage(stage)
        if stage == S.self_review:
            seen_review = True
        elif stage == S.report_preparation:
            seen_report = seen_review
        elif stage == S.completion and not (seen_review and seen_report):
            return False
    return True
