"""Completion gate, release gate and prompt drift."""

import difflib
import logging
from enum import auto
from typing import Iterable, List, Optional, Sequence, Tuple

import attr
from strenum import StrEnum

from ..errors import IncompleteRecord
from .records import PRE_STOP_CHECKS, CheckStatus, CompletionGateRecord, CompletionState, Freshness

logger = logging.getLogger(__name__)

ALL_GATES_PASSED = "all gates passed"
NO_DRIFT = "none"

REQUIRED_FIELDS = (
    "pre_stop_checks",
    "initial_prompt_drift",
    "snapshot_freshness",
    "role_challenges",
    "remaining_action_count",
    "completion_state",
    "housekeeping",
)


def _check_complete(record: CompletionGateRecord):
    for name in REQUIRED_FIELDS:
        if getattr(record, name) is None:
            raise IncompleteRecord(name)
    for check in PRE_STOP_CHECKS:
        if check not in record.pre_stop_checks:
            raise IncompleteRecord(f"pre_stop_checks.{check}")
    if record.housekeeping.cleanup_done is None:
        raise IncompleteRecord("housekeeping.cleanup_done")


def gate_clauses(record: CompletionGateRecord) -> List[Tuple[str, bool, str]]:
    """Return every clause as ``(name, passed, failure reason)`` in evaluation order."""
    _check_complete(record)
    clauses = []
    for check in PRE_STOP_CHECKS:
        status = record.pre_stop_checks[check]
        clauses.append((check, status == CheckStatus.passed, f"pre-stop check {check} is {status}"))
    clauses += [
        ("snapshot_freshness", record.snapshot_freshness == Freshness.fresh, "context snapshot is stale"),
        ("remaining_action_count", record.remaining_action_count == 0,
         f"{record.remaining_action_count} actions remain"),
        ("completion_state", record.completion_state == CompletionState.complete, "completion state is incomplete"),
        ("cleanup_done", bool(record.housekeeping.cleanup_done), "workspace cleanup not done"),
    ]
    return clauses


def evaluate_completion_gate(record: CompletionGateRecord) -> Tuple[bool, str]:
    """Grant stop permission only when every clause passes.

    The reason names the first failing clause.
    """
    for name, passed, reason in gate_clauses(record):
        if not passed:
            return False, reason
    return True, ALL_GATES_PASSED


def decide(record: CompletionGateRecord) -> CompletionGateRecord:
    """Return ``record`` with its stop permission and reason filled in."""
    permitted, reason = evaluate_completion_gate(record)
    logger.info(f"completion gate: {'stop permitted' if permitted else 'stop refused'} ({reason})")
    return attr.evolve(record, stop_permission=permitted, reason=reason)


def check_drift(anchor_goals: Sequence[str], delivered_goals: Sequence[str]) -> str:
    """Describe how delivered goals differ from the anchor, ``none`` when they match."""
    diff = [
        line for line in difflib.unified_diff(list(anchor_goals), list(delivered_goals), lineterm="", n=0)
        if line[:1] in "+-" and not line.startswith(("---", "+++"))
    ]
    return "; ".join(diff) if diff else NO_DRIFT


class ReleaseDecision(StrEnum):
    """Outcome of the release gate."""

    proceed = auto()
    caution = auto()
    rollback = auto()
    manual_review = auto()


@attr.s(frozen=True)
class ReleaseThresholds:
    """Hard thresholds, warning tolerances and review conditions."""

    DEFAULT_SCORE_GAP = 0.25

    score_gap_tolerance = attr.ib(type=float, default=DEFAULT_SCORE_GAP)
    require_baseline = attr.ib(type=bool, default=True)


@attr.s(frozen=True)
class ReleaseVerdict:
    """Release decision with its reasons."""

    decision = attr.ib(type=ReleaseDecision, converter=ReleaseDecision)
    reasons = attr.ib(type=Tuple[str, ...], converter=tuple)

    @property
    def releasable(self) -> bool:
        """Whether the final reviewer may allow a stop."""
        return self.decision in (ReleaseDecision.proceed, ReleaseDecision.caution)


def evaluate_release_gate(
    thresholds: ReleaseThresholds,
    final_admissible: bool,
    final_score: Optional[float],
    baseline_score: Optional[float],
    local_score: Optional[float] = None,
    rollback_triggers: Iterable[str] = (),
) -> ReleaseVerdict:
    """Decide whether the final submission can ship."""
    hard = []
    if not final_admissible or final_score is None:
        hard.append("final submission is not admissible")
    elif baseline_score is not None and final_score > baseline_score:
        hard.append(f"final score {final_score:.4f} worse than baseline {baseline_score:.4f}")
    triggers = sorted(str(t) for t in rollback_triggers)
    if hard or triggers:
        return ReleaseVerdict(ReleaseDecision.rollback, hard + [f"rollback trigger {t}" for t in triggers])
    if thresholds.require_baseline and baseline_score is None:
        return ReleaseVerdict(ReleaseDecision.manual_review, ["no baseline comparison on record"])
    if local_score is not None and abs(local_score - final_score) > thresholds.score_gap_tolerance:
        return ReleaseVerdict(
            ReleaseDecision.caution,
            [f"local score {local_score:.4f} and server score {final_score:.4f} differ by more than "
             f"{thresholds.score_gap_tolerance}"],
        )
    return ReleaseVerdict(ReleaseDecision.proceed, ["thresholds met"])
