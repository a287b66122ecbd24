"""Rollback trigger detection."""

from enum import auto
from typing import FrozenSet, Mapping, Tuple

import attr
from strenum import StrEnum

from .branches import StrategyBranch

DEFAULT_FIXATION_THRESHOLD = 3  # revisions without new evidence


class RollbackKind(StrEnum):
    """Conditions that send a run back to expansion."""

    one_strategy_fixation = auto()
    unconsumed_artifacts = auto()
    weak_validation = auto()
    temporal_ambiguity = auto()
    premature_completion = auto()


def _evidence(instance, attribute, value):
    if not value or not value.strip():
        raise ValueError("a rollback trigger needs evidence")


@attr.s(frozen=True)
class RollbackTrigger:
    """One firing trigger and what shows it."""

    kind = attr.ib(type=RollbackKind, converter=RollbackKind)
    evidence = attr.ib(type=str, validator=_evidence)


@attr.s(frozen=True)
class CandidateChecks:
    """Validation evidence recorded for one scored candidate."""

    local_check = attr.ib(type=bool, default=False)
    baseline_comparison = attr.ib(type=bool, default=False)


@attr.s(frozen=True)
class RunView:
    """The run facts the trigger predicates read."""

    branches = attr.ib(type=Tuple[StrategyBranch, ...], factory=tuple, converter=tuple)
    artifacts = attr.ib(type=FrozenSet[str], factory=frozenset, converter=frozenset)
    cited_artifacts = attr.ib(type=FrozenSet[str], factory=frozenset, converter=frozenset)
    candidates = attr.ib(type=Mapping[str, CandidateChecks], factory=dict)
    unresolved_constraints = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    stop_attempted = attr.ib(type=bool, default=False)
    open_blockers = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    fixation_threshold = attr.ib(type=int, default=DEFAULT_FIXATION_THRESHOLD)


def detect_rollback(view: RunView) -> FrozenSet[RollbackTrigger]:
    """Evaluate every trigger predicate and return the ones firing."""
    triggers = set()
    for branch in view.branches:
        stale = branch.revisions_without_evidence
        if stale >= view.fixation_threshold:
            triggers.add(RollbackTrigger(
                RollbackKind.one_strategy_fixation,
                f"{branch.branch_id} revised {stale} times without new evidence",
            ))
    unconsumed = sorted(view.artifacts - view.cited_artifacts)
    if unconsumed:
        triggers.add(RollbackTrigger(RollbackKind.unconsumed_artifacts, f"never cited: {', '.join(unconsumed)}"))
    for name, checks in sorted(view.candidates.items()):
        missing = [label for label, present in (("local checks", checks.local_check),
                                                ("baseline comparison", checks.baseline_comparison)) if not present]
        if missing:
            triggers.add(RollbackTrigger(RollbackKind.weak_validation, f"{name} lacks {' and '.join(missing)}"))
    if view.unresolved_constraints:
        triggers.add(RollbackTrigger(
            RollbackKind.temporal_ambiguity,
            f"unresolved: {', '.join(view.unresolved_constraints)}",
        ))
    if view.stop_attempted and view.open_blockers:
        triggers.add(RollbackTrigger(
            RollbackKind.premature_completion,
            f"stop attempted with open blockers {', '.join(view.open_blockers)}",
        ))
    return frozenset(triggers)
