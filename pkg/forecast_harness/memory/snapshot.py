"""Context snapshot derivation and freshness."""

import datetime
import hashlib
import json
import logging
from typing import Dict, Optional, Tuple

import attr

from ..errors import MissingSource
from .records import (
    SNAPSHOT_SOURCES,
    CompletionGateRecord,
    ContextSnapshot,
    DecisionLedger,
    Freshness,
    InitialPromptAnchor,
    ProgressLedger,
)

logger = logging.getLogger(__name__)

# branch statuses whose history no longer steers dispatch
SETTLED_STATUSES = ("abandoned", "merged")


def _hash(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


@attr.s(frozen=True)
class SnapshotSources:
    """The six records a snapshot is derived from.

    The alignment map lives inside the decision ledger and the blocker set
    comes from the rebuttal ledger; both still get their own digest.
    """

    anchor = attr.ib(type=Optional[InitialPromptAnchor], default=None)
    progress = attr.ib(type=Optional[ProgressLedger], default=None)
    decisions = attr.ib(type=Optional[DecisionLedger], default=None)
    gate = attr.ib(type=Optional[CompletionGateRecord], default=None)
    blockers = attr.ib(type=Optional[Tuple[str, ...]], default=None,
                       converter=attr.converters.optional(tuple))

    def check(self):
        """Raise :class:`MissingSource` for the first unreadable source."""
        for name in ("anchor", "progress", "decisions", "gate", "blockers"):
            if getattr(self, name) is None:
                raise MissingSource(name)

    def digests(self) -> Dict[str, str]:
        """Return the digest of every source."""
        self.check()
        return {
            "anchor": self.anchor.digest,
            "progress": self.progress.digest,
            "decisions": self.decisions.digest,
            "alignment": _hash([attr.asdict(entry) for entry in self.decisions.alignment]),
            "gate": gate_content_digest(self.gate),
            "blockers": _hash(list(self.blockers)),
        }


def gate_content_digest(gate: CompletionGateRecord) -> str:
    """Digest the gate checklist without the fields derived from the snapshot itself."""
    return attr.evolve(gate, snapshot_freshness=None, stop_permission=False, reason="").digest


def load_sources(store, blockers) -> SnapshotSources:
    """Read the snapshot sources from a memory store."""
    return SnapshotSources(
        anchor=store.read("anchor"),
        progress=store.read("progress"),
        decisions=store.read("decisions"),
        gate=store.read("gate"),
        blockers=blockers,
    )


def derive_snapshot(sources: SnapshotSources, phase: str, at: Optional[datetime.datetime] = None) -> ContextSnapshot:
    """Compact the sources into a snapshot bound to their current digests."""
    digests = sources.digests()
    alignment = sources.decisions.alignment
    forbidden = list(sources.anchor.non_goals)
    forbidden += [f"lead with {entry.branch_id}" for entry in alignment if entry.status == "blocked"]
    snapshot = ContextSnapshot(
        current_phase=phase,
        task_anchors=sources.anchor.goals,
        active_blockers=sources.blockers,
        forbidden_actions=forbidden,
        decisions_in_force=[f"decision:{n}" for n in range(len(sources.decisions.decisions))],
        verified_evidence=sorted({evidence for _, evidence in sources.progress.suggested_next}),
        next_dispatch_focus=sources.progress.current_focus,
        ignorable_history=[entry.branch_id for entry in alignment if entry.status in SETTLED_STATUSES],
        derived_from_digests=digests,
        refreshed_at=(at or datetime.datetime.now(datetime.timezone.utc)).isoformat(),
    )
    logger.debug(f"snapshot for {phase}: {len(snapshot.active_blockers)} blockers")
    return snapshot


def stale_sources(snapshot: ContextSnapshot, sources: SnapshotSources) -> Tuple[str, ...]:
    """Name the sources whose digest moved since ``snapshot`` was derived."""
    current = sources.digests()
    return tuple(name for name in SNAPSHOT_SOURCES if snapshot.derived_from_digests.get(name) != current[name])


def snapshot_freshness(snapshot: ContextSnapshot, sources: SnapshotSources) -> Freshness:
    """Fresh when every source digest still matches."""
    stale = stale_sources(snapshot, sources)
    if stale:
        logger.warning(f"snapshot stale: {', '.join(stale)} changed")
        return Freshness.stale
    return Freshness.fresh


def effective_blockers(snapshot: ContextSnapshot, sources: SnapshotSources) -> Tuple[str, ...]:
    """Blockers in force; a stale snapshot defers to the sources."""
    if snapshot_freshness(snapshot, sources) == Freshness.fresh:
        return snapshot.active_blockers
    return sources.blockers
