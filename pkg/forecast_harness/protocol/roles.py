"""Role identities and the authority order."""

from enum import auto

import attr
from strenum import StrEnum


class RoleName(StrEnum):
    """Roles taking part in a governed run."""

    orchestrator = auto()
    interpreter = auto()
    evidence_collector = auto()
    constructor = auto()
    temporal_governor = auto()
    final_reviewer = auto()
    other_subagent = auto()


# lower rank binds; everything not listed ranks OTHER_RANK
AUTHORITY_RANK = {
    RoleName.final_reviewer: 0,
    RoleName.temporal_governor: 1,
    RoleName.orchestrator: 2,
}
OTHER_RANK = 3


@attr.s(frozen=True, order=False)
class RoleId:
    """A role and its authority rank."""

    name = attr.ib(type=RoleName, converter=RoleName)

    @property
    def authority_rank(self) -> int:
        """Return the rank, 0 being the highest authority."""
        return AUTHORITY_RANK.get(self.name, OTHER_RANK)

    def outranks_or_equals(self, other: "RoleId") -> bool:
        """Whether this role may overrule ``other``."""
        return self.authority_rank <= other.authority_rank

    def __str__(self):
        """Render as the role name."""
        return str(self.name)


ORCHESTRATOR = RoleId(RoleName.orchestrator)
INTERPRETER = RoleId(RoleName.interpreter)
EVIDENCE_COLLECTOR = RoleId(RoleName.evidence_collector)
CONSTRUCTOR = RoleId(RoleName.constructor)
TEMPORAL_GOVERNOR = RoleId(RoleName.temporal_governor)
FINAL_REVIEWER = RoleId(RoleName.final_reviewer)
