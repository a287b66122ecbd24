"""Memory directory with a write-ahead journal."""

import datetime
import json
import logging
import os
import threading
from pathlib import Path
from typing import Dict, Optional

import attr

from ..errors import AnchorAlreadyExists, CorruptState, MissingSource, MutationOfFrozenField, UnwritableDirectory
from ..protocol.memory_sync import AbsorptionDecision
from ..protocol.records import MemorySyncProposal
from .records import (
    RECORD_TYPES,
    DecisionLedger,
    InitialPromptAnchor,
    MemoryRecord,
    PriorEntry,
    PriorLedger,
    RelationMap,
    TraceEntry,
    TraceRecord,
)

JOURNAL_FILE = "journal.log"
RECORD_SUFFIX = ".txt"


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class MemoryStore:
    """One plain-text document per record plus an ordered journal of writes.

    Every write lands in ``journal.log`` before the record file is
    replaced, so replaying the journal reproduces the directory.
    """

    def __init__(self, root: Path, logger: Optional[logging.Logger] = None):
        """Open or create the memory directory at ``root``."""
        self.root = Path(root)
        self.logger = logger or logging.getLogger(__name__)
        self._lock = threading.Lock()
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise UnwritableDirectory(f"{self.root}: {e}") from None

    @property
    def journal_path(self) -> Path:
        """Return the journal location."""
        return self.root / JOURNAL_FILE

    def path(self, name: str) -> Path:
        """Return the document path of record ``name``."""
        if name not in RECORD_TYPES:
            raise KeyError(f"unknown memory record {name!r}")
        return self.root / f"{name}{RECORD_SUFFIX}"

    def read(self, name: str) -> Optional[MemoryRecord]:
        """Return the last committed version of ``name``, or None."""
        path = self.path(name)
        if not path.exists():
            return None
        return RECORD_TYPES[name].from_text(path.read_text(encoding="utf-8"))

    def require(self, name: str) -> MemoryRecord:
        """Return record ``name`` or raise :class:`MissingSource`."""
        record = self.read(name)
        if record is None:
            raise MissingSource(name)
        return record

    def digest(self, name: str) -> Optional[str]:
        """Return the digest of record ``name``, None when absent."""
        record = self.read(name)
        return record.digest if record is not None else None

    def write(self, record: MemoryRecord) -> str:
        """Journal and commit ``record``; return its digest."""
        name = record.NAME
        text = record.to_text()
        entry = json.dumps({"at": _now(), "record": name, "digest": record.digest, "text": text}, sort_keys=True)
        with self._lock:
            try:
                with open(self.journal_path, "a", encoding="utf-8") as f:
                    f.write(entry + "\n")
                    f.flush()
                    os.fsync(f.fileno())
                tmp = self.path(name).with_suffix(".tmp")
                tmp.write_text(text, encoding="utf-8")
                os.replace(tmp, self.path(name))
            except OSError as e:
                raise UnwritableDirectory(f"{self.root}: {e}") from None
        self.logger.debug(f"memory {name} -> {record.digest[:12]}")
        return record.digest

    def replay_journal(self) -> Dict[str, MemoryRecord]:
        """Rebuild every record from the journal alone."""
        records: Dict[str, MemoryRecord] = {}
        if not self.journal_path.exists():
            return records
        lines = self.journal_path.read_text(encoding="utf-8").splitlines()
        for number, line in enumerate(lines, start=1):
            try:
                entry = json.loads(line)
                records[entry["record"]] = RECORD_TYPES[entry["record"]].from_text(entry["text"])
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptState(f"{self.journal_path} line {number}: {e}") from None
        return records

    # anchor

    def record_anchor(self, anchor: InitialPromptAnchor) -> InitialPromptAnchor:
        """Create the prompt anchor; it can be created once only."""
        if self.path(InitialPromptAnchor.NAME).exists():
            raise AnchorAlreadyExists("prompt anchor already recorded")
        self.write(anchor)
        return anchor

    def update_anchor(self, anchor: InitialPromptAnchor) -> InitialPromptAnchor:
        """Replace the anchor if only its clarifications grew."""
        current = self.require(InitialPromptAnchor.NAME)
        for name in InitialPromptAnchor.FROZEN_FIELDS:
            if getattr(anchor, name) != getattr(current, name):
                raise MutationOfFrozenField(name)
        if anchor.clarifications[:len(current.clarifications)] != current.clarifications:
            raise MutationOfFrozenField("clarifications")
        self.write(anchor)
        return anchor

    def append_clarification(self, text: str, at: Optional[str] = None) -> InitialPromptAnchor:
        """Append one clarification to the anchor."""
        current = self.require(InitialPromptAnchor.NAME)
        updated = attr.evolve(current, clarifications=current.clarifications + ((at or _now(), text),))
        return self.update_anchor(updated)

    # absorbed proposals

    def apply(self, proposal: MemorySyncProposal, decision: AbsorptionDecision) -> Optional[str]:
        """Write an accepted proposal into its target record; return the new digest."""
        if not decision.accepted:
            return None
        target = decision.target
        if target == PriorLedger.NAME:
            ledger = self.read(target) or PriorLedger()
            polarity = "positive" if proposal.kind == "positive_candidate" else "negative"
            entry = PriorEntry(polarity, proposal.content, proposal.scope_and_limits, proposal.evidence)
            return self.write(attr.evolve(ledger, entries=ledger.entries + (entry,)))
        if target == DecisionLedger.NAME:
            ledger = self.read(target) or DecisionLedger()
            decision_row = (proposal.content, proposal.reason, proposal.scope_and_limits or "low")
            return self.write(attr.evolve(ledger, decisions=ledger.decisions + (decision_row,)))
        if target == RelationMap.NAME:
            relations = self.read(target) or RelationMap()
            source, _, rest = proposal.content.partition(" -> ")
            dest, _, label = rest.partition(": ")
            return self.write(attr.evolve(relations, edges=relations.edges + ((source, dest, label),)))
        if target == TraceRecord.NAME:
            trace = self.read(target) or TraceRecord()
            entry = TraceEntry(proposal.content, proposal.reason, "", proposal.evidence)
            return self.write(attr.evolve(trace, rounds=trace.rounds + (entry,)))
        raise ValueError(f"accepted {proposal.kind} has no memory document to write")
