"""Digest-gated absorption of memory proposals."""

import logging
from enum import auto

import attr
from strenum import StrEnum

from ..errors import MalformedProposal, StaleDigest
from .records import MemorySyncProposal, ProposalKind

logger = logging.getLogger(__name__)

DEFER_BELOW = 0.5  # confidence under which a proposal waits for more evidence
ALREADY_RECORDED = "already recorded"

# memory record each proposal kind lands in
PROPOSAL_TARGETS = {
    ProposalKind.positive_candidate: "priors",
    ProposalKind.negative_candidate: "priors",
    ProposalKind.relation_candidate: "relations",
    ProposalKind.decision_candidate: "decisions",
    ProposalKind.context_snapshot_candidate: "snapshot",
    ProposalKind.trace_event_candidate: "trace",
    ProposalKind.runtime_event_candidate: "events",
}


class Absorption(StrEnum):
    """What the orchestrator does with a proposal."""

    accept = auto()
    reject = auto()
    defer = auto()


@attr.s(frozen=True)
class AbsorptionDecision:
    """Decision plus the reason recorded with it."""

    outcome = attr.ib(type=Absorption, converter=Absorption)
    reason = attr.ib(type=str)
    target = attr.ib(type=str)

    @property
    def accepted(self) -> bool:
        """Whether the proposal is to be written."""
        return self.outcome == Absorption.accept


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def check_proposal(proposal: MemorySyncProposal) -> None:
    """Raise :class:`MalformedProposal` unless content, reason and confidence are present."""
    if not proposal.content or not proposal.content.strip():
        raise MalformedProposal("proposal has no content")
    if not proposal.reason or not proposal.reason.strip():
        raise MalformedProposal("proposal has no reason")
    if proposal.confidence is None or not 0.0 <= proposal.confidence <= 1.0:
        raise MalformedProposal(f"confidence must lie in [0, 1], got {proposal.confidence!r}")


def absorb_memory_proposal(proposal: MemorySyncProposal, current_artifact, read_digest: str) -> AbsorptionDecision:
    """Decide on ``proposal`` against the record its proposer read.

    ``current_artifact`` is the memory record as it stands now; it must
    expose ``digest`` and ``statements()``. ``read_digest`` is the digest the
    caller saw, so a proposal made against an older version is refused. The
    record itself is never touched.
    """
    check_proposal(proposal)
    target = PROPOSAL_TARGETS[proposal.kind]
    if read_digest != current_artifact.digest:
        raise StaleDigest(f"{target} changed since it was read ({read_digest[:12]} vs {current_artifact.digest[:12]})")

    content = _normalize(proposal.content)
    if any(_normalize(s) == content for s in current_artifact.statements()):
        decision = AbsorptionDecision(Absorption.reject, ALREADY_RECORDED, target)
    elif target == "priors" and not proposal.scope_and_limits.strip():
        decision = AbsorptionDecision(Absorption.reject, "prior without scope and limits", target)
    elif proposal.confidence < DEFER_BELOW:
        decision = AbsorptionDecision(Absorption.defer, f"confidence {proposal.confidence} below {DEFER_BELOW}",
                                      target)
    else:
        decision = AbsorptionDecision(Absorption.accept, proposal.reason, target)

    if not decision.accepted:
        logger.warning(f"{decision.outcome} {proposal.kind} from {proposal.proposer}: {decision.reason}")
    return decision
