"""Issue-by-issue rebuttal ledger."""

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import attr

from ..errors import RecheckBeforeResponse, UnknownIssue, UnwritableDirectory
from .records import IssueResponse, RecheckVerdict, ReviewIssue

logger = logging.getLogger(__name__)

REBUTTAL_DIR = "rebuttals"


@attr.s(frozen=True)
class IssueThread:
    """One issue with every response and verdict it received, in order."""

    issue = attr.ib(type=ReviewIssue)
    responses = attr.ib(type=Tuple[IssueResponse, ...], factory=tuple, converter=tuple)
    verdicts = attr.ib(type=Tuple[RecheckVerdict, ...], factory=tuple, converter=tuple)

    @property
    def closed(self) -> bool:
        """Closed once a role at least as senior as the raiser resolved it."""
        return any(v.resolved and v.issued_by.outranks_or_equals(self.issue.raised_by) for v in self.verdicts)

    @property
    def recheck_pending(self) -> bool:
        """Whether the latest response asks for a recheck not yet answered."""
        if not self.responses or not self.responses[-1].recheck_requested:
            return False
        return len(self.verdicts) < len(self.responses)

    def to_text(self) -> str:
        """Render as a plain-text document."""
        lines = [
            f"issue: {self.issue.issue_id}",
            f"raised_by: {self.issue.raised_by}",
            f"text: {self.issue.text}",
            f"status: {'closed' if self.closed else 'open'}",
        ]
        for n, response in enumerate(self.responses, start=1):
            lines += [
                f"response {n}: {response.acceptance_status}",
                f"  current_evidence: {response.current_evidence}",
                f"  fix_plan: {response.fix_plan}",
                f"  missing_evidence: {response.missing_evidence or '-'}",
                f"  remaining_blocker: {response.remaining_blocker or '-'}",
                f"  recheck_requested: {str(response.recheck_requested).lower()}",
            ]
        for n, verdict in enumerate(self.verdicts, start=1):
            lines += [
                f"verdict {n}: {'resolved' if verdict.resolved else 'unresolved'} by {verdict.issued_by}",
                f"  reason: {verdict.reason}",
                f"  remaining_gap: {verdict.remaining_gap or '-'}",
                f"  required_next_change: {verdict.required_next_change or '-'}",
                f"  completion_signal: {verdict.completion_signal}",
                f"  follow_up_action: {verdict.follow_up_action or '-'}",
            ]
        return "\n".join(lines) + "\n"


@attr.s(frozen=True)
class RebuttalLedger:
    """Open and closed issues against one candidate."""

    candidate = attr.ib(type=str)
    threads = attr.ib(type=Tuple[IssueThread, ...], factory=tuple, converter=tuple)

    def thread(self, issue_id: str) -> Optional[IssueThread]:
        """Return the thread of ``issue_id``."""
        for thread in self.threads:
            if thread.issue.issue_id == issue_id:
                return thread
        return None

    @property
    def open_issue_ids(self) -> Tuple[str, ...]:
        """Ids of issues still open, in opening order."""
        return tuple(t.issue.issue_id for t in self.threads if not t.closed)

    @property
    def blocked(self) -> bool:
        """A candidate stays blocked until every issue is closed."""
        return bool(self.open_issue_ids)

    def _replace(self, thread: IssueThread) -> "RebuttalLedger":
        threads = tuple(thread if t.issue.issue_id == thread.issue.issue_id else t for t in self.threads)
        return attr.evolve(self, threads=threads)

    def _open_thread(self, issue_id: str) -> IssueThread:
        thread = self.thread(issue_id)
        if thread is None or thread.closed:
            raise UnknownIssue(f"no open issue {issue_id!r} against {self.candidate}")
        return thread

    def write_documents(self, run_dir: Path) -> List[Path]:
        """Write one document per issue under ``rebuttals/``."""
        directory = Path(run_dir) / REBUTTAL_DIR
        paths = []
        try:
            directory.mkdir(parents=True, exist_ok=True)
            for thread in self.threads:
                path = directory / f"{thread.issue.issue_id}.txt"
                path.write_text(f"candidate: {self.candidate}\n" + thread.to_text(), encoding="utf-8")
                paths.append(path)
        except OSError as e:
            raise UnwritableDirectory(f"{directory}: {e}") from None
        return paths


def open_rebuttal(ledger: RebuttalLedger, issues: Iterable[ReviewIssue]) -> RebuttalLedger:
    """Open new issues against the ledger's candidate."""
    threads = list(ledger.threads)
    for issue in issues:
        if ledger.thread(issue.issue_id) is not None or any(t.issue.issue_id == issue.issue_id for t in threads):
            raise ValueError(f"issue {issue.issue_id} already opened")
        threads.append(IssueThread(issue))
    return attr.evolve(ledger, threads=threads)


def answer_issue(ledger: RebuttalLedger, issue_id: str, response: IssueResponse) -> RebuttalLedger:
    """Append a response to an open issue."""
    thread = ledger._open_thread(issue_id)
    return ledger._replace(attr.evolve(thread, responses=thread.responses + (response,)))


def recheck(ledger: RebuttalLedger, issue_id: str, verdict: RecheckVerdict) -> RebuttalLedger:
    """Append a verdict to an issue whose latest response asked for a recheck."""
    thread = ledger._open_thread(issue_id)
    if not thread.recheck_pending:
        raise RecheckBeforeResponse(f"issue {issue_id} has no response asking for a recheck")
    if verdict.resolved and not verdict.issued_by.outranks_or_equals(thread.issue.raised_by):
        logger.warning(f"{verdict.issued_by} cannot close {issue_id} raised by {thread.issue.raised_by}")
    return ledger._replace(attr.evolve(thread, verdicts=thread.verdicts + (verdict,)))
