"""Submission history, leaderboard and the crash-safe submission log."""

import asyncio
import datetime
import json
import logging
import os
import threading
from pathlib import Path
from typing import Dict, List, Optional

import attr
from attr import define, field

from ..data.reconstruction import TRAIN_FILE, ReconstructionBundle, digest
from ..data.table import UnifiedSeriesTable, ingest_table
from ..errors import CorruptState, SubmissionLimitReached
from ..task.model import TaskFile, ValidationOutcome, WorkspaceManifest
from ..validation.gate import evaluate

SUBMISSION_LOG_FILE = "submissions.jsonl"


def utcnow() -> datetime.datetime:
    """Return the current time, timezone aware in UTC."""
    return datetime.datetime.now(datetime.timezone.utc)


@attr.s(frozen=True)
class SubmissionRecord:
    """One received submission and its outcome."""

    id = attr.ib(type=int)
    received_at = attr.ib(type=datetime.datetime)
    outcome = attr.ib(type=ValidationOutcome)
    payload_digest = attr.ib(type=str)
    submitter_label = attr.ib(type=str)

    @id.validator
    def _check_id(self, attribute, value):
        if value < 1:
            raise ValueError(f"submission ids start at 1, got {value}")

    @property
    def admissible(self) -> bool:
        """Whether every validity check passed."""
        return self.outcome.admissible

    @property
    def primary_score(self) -> Optional[float]:
        """Return the ranking score, None when inadmissible."""
        return self.outcome.scores.primary_value if self.outcome.scores is not None else None

    def to_dict(self) -> dict:
        """Return a JSON-ready dict."""
        return {
            "id": self.id,
            "received_at": self.received_at.isoformat(),
            "submitter": self.submitter_label,
            "payload_digest": self.payload_digest,
            "admissible": self.admissible,
            "primary_score": self.primary_score,
            "outcome": self.outcome.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SubmissionRecord":
        """Build from :meth:`to_dict` output."""
        return cls(
            id=int(data["id"]),
            received_at=datetime.datetime.fromisoformat(data["received_at"]),
            outcome=ValidationOutcome.from_dict(data["outcome"]),
            payload_digest=data["payload_digest"],
            submitter_label=data["submitter"],
        )


@attr.s(frozen=True)
class LeaderboardRow:
    """Best admissible result of one submitter."""

    submitter_label = attr.ib(type=str)
    best_score = attr.ib(type=float)
    submission_id = attr.ib(type=int)

    def to_dict(self) -> dict:
        """Return a JSON-ready dict."""
        return {"submitter": self.submitter_label, "score": self.best_score, "submission_id": self.submission_id}


def leaderboard(submissions) -> List[LeaderboardRow]:
    """Rank submitters by their best admissible primary score.

    Lower is better; equal scores rank the earlier submission id first.
    """
    best: Dict[str, LeaderboardRow] = {}
    for record in submissions:
        if not record.admissible:
            continue
        current = best.get(record.submitter_label)
        candidate = LeaderboardRow(record.submitter_label, record.primary_score, record.id)
        if current is None or (candidate.best_score, candidate.submission_id) < (current.best_score,
                                                                               current.submission_id):
            best[record.submitter_label] = candidate
    return sorted(best.values(), key=lambda row: (row.best_score, row.submission_id))


class SubmissionLog:
    """Append-only JSON lines file, one submission record per line."""

    def __init__(self, path: Path):
        """Open (lazily) the log at ``path``."""
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: SubmissionRecord) -> None:
        """Write one record and force it to disk."""
        line = json.dumps(record.to_dict(), sort_keys=True) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())

    def restore(self) -> List[SubmissionRecord]:
        """Read every record back, checking the id sequence."""
        if not self.path.exists():
            return []
        records = []
        with self._lock:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = SubmissionRecord.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptState(f"{self.path} line {number}: {e}") from None
            if record.id != len(records) + 1:
                raise CorruptState(f"{self.path} line {number}: expected id {len(records) + 1}, got {record.id}")
            records.append(record)
        return records


@define
class TaskServerState:
    """Everything the competition server holds for one task."""

    task: TaskFile
    manifest: WorkspaceManifest
    public_files: Dict[str, bytes]
    hidden_truth: UnifiedSeriesTable
    history: Optional[UnifiedSeriesTable] = None
    submissions: List[SubmissionRecord] = field(factory=list)
    started_at: datetime.datetime = field(factory=utcnow)
    log: Optional[SubmissionLog] = None
    logger: logging.Logger = field(factory=lambda: logging.getLogger(__name__))
    _lock: Optional[asyncio.Lock] = None

    @classmethod
    def from_bundle(cls, bundle: ReconstructionBundle, log_path: Optional[Path] = None) -> "TaskServerState":
        """Build from a reconstruction, restoring any submission log at ``log_path``."""
        history = None
        if TRAIN_FILE in bundle.public_files:
            history = ingest_table(bundle.public_files[TRAIN_FILE], timezone=bundle.task.scope.timezone)
        log = SubmissionLog(log_path) if log_path is not None else None
        submissions = log.restore() if log is not None else []
        state = cls(
            task=bundle.task,
            manifest=bundle.manifest,
            public_files=dict(bundle.public_files),
            hidden_truth=bundle.hidden_truth,
            history=history,
            submissions=submissions,
            log=log,
        )
        if submissions:
            state.logger.info(f"restored {len(submissions)} submissions from {log_path}")
        return state

    @property
    def submission_lock(self) -> asyncio.Lock:
        """Return the submission lock, bound to the running loop on first use."""
        if self._lock is None:
            self._lock = asyncio.Lock()
        return self._lock

    def file_listing(self) -> List[dict]:
        """Return name, size and digest of every public file."""
        return [{
            "name": name,
            "bytes": len(payload),
            "digest": digest(payload),
        } for name, payload in sorted(self.public_files.items())]

    def leaderboard(self) -> List[LeaderboardRow]:
        """Recompute the leaderboard from the submission history."""
        return leaderboard(self.submissions)

    def _check_limit(self):
        limit = self.task.constraints.max_submissions
        if limit is not None and len(self.submissions) >= limit:
            raise SubmissionLimitReached(f"{len(self.submissions)} of {limit} submissions used")

    async def handle_submission(self, payload: bytes, submitter_label: str) -> SubmissionRecord:
        """Validate, score and record one submission.

        Evaluation and log append run inside one critical section, so ids
        and history order agree under concurrent requests.
        """
        async with self.submission_lock:
            self._check_limit()
            loop = asyncio.get_running_loop()
            outcome = await loop.run_in_executor(None, evaluate, payload, self.task, self.hidden_truth, self.history)
            record = SubmissionRecord(
                id=len(self.submissions) + 1,
                received_at=utcnow(),
                outcome=outcome,
                payload_digest=digest(payload),
                submitter_label=submitter_label,
            )
            if self.log is not None:
                self.log.append(record)
            self.submissions.append(record)

        if record.admissible:
            self.logger.info(f"submission {record.id} from {submitter_label}: {record.primary_score!r}")
        else:
            failed = ", ".join(str(check.check_id) for check in outcome.validity.failures)
            self.logger.warning(f"submission {record.id} from {submitter_label} inadmissible: {failed}")
        return record
