"""Context compaction triggers."""

from enum import auto
from typing import FrozenSet

import attr
from strenum import StrEnum


class CompactionTrigger(StrEnum):
    """Moments at which the context snapshot must be refreshed."""

    after_workspace_initialization = auto()
    after_strategy_switch = auto()
    after_parallel_merge = auto()
    after_review_loop_opened = auto()
    before_final_reviewer = auto()


@attr.s(frozen=True)
class RunStateView:
    """What the trigger predicates look at."""

    workspace_initialized = attr.ib(type=bool, default=False)
    snapshot_since_initialization = attr.ib(type=bool, default=False)
    strategy_switched = attr.ib(type=bool, default=False)
    parallel_reportbacks_merged = attr.ib(type=bool, default=False)
    review_loop_opened = attr.ib(type=bool, default=False)
    final_review_queued = attr.ib(type=bool, default=False)
    snapshot_fresh = attr.ib(type=bool, default=True)


def compaction_due(run_state: RunStateView) -> FrozenSet[CompactionTrigger]:
    """Return every trigger currently firing."""
    due = set()
    if run_state.workspace_initialized and not run_state.snapshot_since_initialization:
        due.add(CompactionTrigger.after_workspace_initialization)
    if run_state.strategy_switched:
        due.add(CompactionTrigger.after_strategy_switch)
    if run_state.parallel_reportbacks_merged:
        due.add(CompactionTrigger.after_parallel_merge)
    if run_state.review_loop_opened:
        due.add(CompactionTrigger.after_review_loop_opened)
    if run_state.final_review_queued and not run_state.snapshot_fresh:
        due.add(CompactionTrigger.before_final_reviewer)
    return frozenset(due)
