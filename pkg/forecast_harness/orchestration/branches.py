"""Strategy branches and the table tracking them."""

import logging
from enum import auto
from typing import Dict, Iterable, Optional, Tuple

import attr
from attr import define, field
from strenum import StrEnum

from ..data.leakage import LeakageVerdict
from ..errors import BranchBlocked
from ..memory.records import AlignmentEntry


class BranchStatus(StrEnum):
    """Where a strategy line stands."""

    open = auto()
    leading = auto()
    merged = auto()
    abandoned = auto()


@attr.s(frozen=True)
class StrategyBranch:
    """One strategy line and its revision history.

    ``revisions`` holds, per revision, the evidence artifacts it added.
    """

    branch_id = attr.ib(type=str)
    wave = attr.ib(type=int)
    description = attr.ib(type=str)
    comparison_point = attr.ib(type=str)
    status = attr.ib(type=BranchStatus, default=BranchStatus.open, converter=BranchStatus)
    leakage_verdict = attr.ib(type=Optional[LeakageVerdict], default=None,
                              converter=attr.converters.optional(LeakageVerdict))
    revisions = attr.ib(type=Tuple[Tuple[str, ...], ...], factory=tuple,
                        converter=lambda value: tuple(tuple(r) for r in value))

    @wave.validator
    def _check_wave(self, attribute, value):
        if value < 0:
            raise ValueError("wave must be non-negative")

    def __attrs_post_init__(self):
        """An invalid branch never leads."""
        if self.status == BranchStatus.leading and self.leakage_verdict == LeakageVerdict.invalid:
            raise BranchBlocked(f"branch {self.branch_id} is leakage-invalid")

    @property
    def active(self) -> bool:
        """Whether the branch is still open or leading."""
        return self.status in (BranchStatus.open, BranchStatus.leading)

    @property
    def revisions_without_evidence(self) -> int:
        """Count the trailing revisions that added no evidence artifact."""
        count = 0
        for artifacts in reversed(self.revisions):
            if artifacts:
                break
            count += 1
        return count


@define
class BranchTable:
    """All branches of a run, keyed by id."""

    branches: Dict[str, StrategyBranch] = field(factory=dict)
    logger: logging.Logger = field(factory=lambda: logging.getLogger(__name__))

    def __iter__(self):
        """Iterate over branches in opening order."""
        return iter(self.branches.values())

    def get(self, branch_id: str) -> Optional[StrategyBranch]:
        """Return the branch ``branch_id``."""
        return self.branches.get(branch_id)

    def open(self, branch: StrategyBranch) -> StrategyBranch:
        """Open ``branch``; reopening an existing id counts as a revision."""
        current = self.branches.get(branch.branch_id)
        if current is not None:
            return self.revise(branch.branch_id, (), verdict=branch.leakage_verdict)
        self.branches[branch.branch_id] = branch
        self.logger.info(f"opened branch {branch.branch_id} in wave {branch.wave} ({branch.leakage_verdict})")
        return branch

    def revise(self, branch_id: str, artifacts: Iterable[str],
               verdict: Optional[LeakageVerdict] = None) -> StrategyBranch:
        """Record one revision and the artifacts it produced."""
        branch = self.branches[branch_id]
        changes = {"revisions": branch.revisions + (tuple(artifacts),)}
        if verdict is not None:
            changes["leakage_verdict"] = verdict
        self.branches[branch_id] = attr.evolve(branch, **changes)
        return self.branches[branch_id]

    @property
    def leading(self) -> Optional[StrategyBranch]:
        """Return the leading branch."""
        for branch in self.branches.values():
            if branch.status == BranchStatus.leading:
                return branch
        return None

    def active(self, wave: Optional[int] = None) -> Tuple[StrategyBranch, ...]:
        """Return open and leading branches, optionally of one wave."""
        return tuple(b for b in self.branches.values() if b.active and (wave is None or b.wave == wave))

    def promote(self, branch_id: str) -> StrategyBranch:
        """Make ``branch_id`` lead; the previous leader goes back to open."""
        branch = self.branches[branch_id]
        if branch.leakage_verdict == LeakageVerdict.invalid:
            raise BranchBlocked(f"branch {branch_id} is leakage-invalid and cannot lead")
        previous = self.leading
        if previous is not None and previous.branch_id != branch_id:
            self.branches[previous.branch_id] = attr.evolve(previous, status=BranchStatus.open)
        self.branches[branch_id] = attr.evolve(branch, status=BranchStatus.leading)
        self.logger.info(f"branch {branch_id} leads")
        return self.branches[branch_id]

    def abandon(self, branch_id: str, reason: str) -> StrategyBranch:
        """Close ``branch_id`` without merging it."""
        self.branches[branch_id] = attr.evolve(self.branches[branch_id], status=BranchStatus.abandoned)
        self.logger.info(f"abandoned branch {branch_id}: {reason}")
        return self.branches[branch_id]

    def merge_leader(self) -> Optional[StrategyBranch]:
        """Mark the leading branch merged into the final result."""
        leader = self.leading
        if leader is None:
            return None
        self.branches[leader.branch_id] = attr.evolve(leader, status=BranchStatus.merged)
        return self.branches[leader.branch_id]

    def to_alignment(self) -> Tuple[AlignmentEntry, ...]:
        """Render the branch table as alignment map entries."""
        return tuple(
            AlignmentEntry(
                branch_id=b.branch_id,
                wave=b.wave,
                comparison_point=b.comparison_point,
                status="blocked" if b.leakage_verdict == LeakageVerdict.invalid and b.active else str(b.status),
                action_item="add fallback or abandon" if b.leakage_verdict == LeakageVerdict.invalid else "",
            )
            for b in self.branches.values()
        )
