"""What roles see and what they hand back."""

import logging
import os
from pathlib import Path, PurePosixPath
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import attr
import pandas as pd

from ..config import HarnessConfig
from ..data.leakage import LeakageReport, LeakageVerdict, strategy_verdict
from ..data.table import UnifiedSeriesTable
from ..errors import ScopeViolation, UnwritableDirectory
from ..memory.gate import ReleaseVerdict
from ..memory.records import MemoryRecord
from ..protocol.rebuttal import RebuttalLedger
from ..protocol.records import (
    ActionKind,
    CompletionSignal,
    DispatchPacket,
    IssueResponse,
    RecheckVerdict,
    Reportback,
    ReviewIssue,
)
from ..task.model import AccessScope, TaskFile, TemporalConstraintSurface
from .backtest import BacktestResult
from .branches import StrategyBranch
from .forecasters import Forecaster

logger = logging.getLogger(__name__)

FIGURES_DIR = "figures"
SUBMISSIONS_DIR = "submissions"
MEMORY_DIR = "memory"
REPORT_FILE = "report.txt"

# where each write kind lands inside the run directory
ARTIFACT_DIRS = {
    ActionKind.figures: FIGURES_DIR,
    ActionKind.submissions: SUBMISSIONS_DIR,
    ActionKind.memory: MEMORY_DIR,
    ActionKind.rebuttals: "rebuttals",
    ActionKind.report: "",
}

ForecastRun = Callable[[UnifiedSeriesTable, AccessScope], Tuple[UnifiedSeriesTable, Optional[LeakageReport]]]


@attr.s(frozen=True)
class CandidateSpec:
    """A named forecasting strategy the constructor can propose."""

    name = attr.ib(type=str)
    description = attr.ib(type=str)
    build = attr.ib(type=Callable[[HarnessConfig], ForecastRun])
    has_fallback = attr.ib(type=bool, default=False)
    baseline = attr.ib(type=bool, default=False)

    def forecast(self, table: UnifiedSeriesTable, scope: AccessScope,
                 config: HarnessConfig) -> Tuple[UnifiedSeriesTable, Optional[LeakageReport]]:
        """Run the strategy; lagged strategies also return their leakage report."""
        return self.build(config)(table, scope)

    def forecaster(self, config: HarnessConfig) -> Forecaster:
        """Return the strategy as a plain forecaster."""
        run = self.build(config)
        return lambda table, scope: run(table, scope)[0]


@attr.s(frozen=True)
class Candidate:
    """A proposed strategy with its submission and local evidence."""

    name = attr.ib(type=str)
    description = attr.ib(type=str)
    submission = attr.ib(type=str)
    payload_digest = attr.ib(type=str)
    has_fallback = attr.ib(type=bool, default=False)
    baseline = attr.ib(type=bool, default=False)
    leakage = attr.ib(type=Optional[LeakageReport], default=None)
    backtest = attr.ib(type=Optional[BacktestResult], default=None)

    @property
    def verdict(self) -> LeakageVerdict:
        """Leakage verdict of the whole strategy."""
        if self.leakage is None:
            return LeakageVerdict.fully_valid
        return strategy_verdict(self.leakage, self.has_fallback)

    @property
    def local_score(self) -> Optional[float]:
        """Local backtest RMSLE, None when not scored."""
        return self.backtest.score if self.backtest is not None else None


@attr.s(frozen=True)
class WorkspaceView:
    """Read-only run state handed to a role."""

    task = attr.ib(type=TaskFile)
    surface = attr.ib(type=TemporalConstraintSurface)
    files = attr.ib(type=Mapping[str, bytes])
    history = attr.ib(type=UnifiedSeriesTable)
    skeleton = attr.ib(type=pd.DataFrame)
    config = attr.ib(type=HarnessConfig)
    wave = attr.ib(type=int, default=0)
    candidates = attr.ib(type=Tuple[Candidate, ...], factory=tuple, converter=tuple)
    branches = attr.ib(type=Tuple[StrategyBranch, ...], factory=tuple, converter=tuple)
    artifacts = attr.ib(type=FrozenSet[str], factory=frozenset, converter=frozenset)
    cited_artifacts = attr.ib(type=FrozenSet[str], factory=frozenset, converter=frozenset)
    ledger = attr.ib(type=Optional[RebuttalLedger], default=None)
    final_submission = attr.ib(type=Optional[dict], default=None)
    baseline_submission = attr.ib(type=Optional[dict], default=None)
    rollback_triggers = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)

    def candidate(self, name: str) -> Optional[Candidate]:
        """Return the candidate called ``name``."""
        for candidate in self.candidates:
            if candidate.name == name:
                return candidate
        return None

    @property
    def leader(self) -> Optional[StrategyBranch]:
        """Return the leading branch."""
        for branch in self.branches:
            if branch.status == "leading":
                return branch
        return None

    def active_candidates(self) -> Tuple[Candidate, ...]:
        """Candidates whose branch is still open or leading."""
        active = {b.branch_id for b in self.branches if b.active}
        return tuple(c for c in self.candidates if c.name in active)


@attr.s(frozen=True)
class MemoryView:
    """Memory records as they stood when a dispatch was created."""

    records = attr.ib(type=Mapping[str, MemoryRecord], factory=dict, converter=dict)

    def get(self, name: str) -> Optional[MemoryRecord]:
        """Return record ``name`` or None."""
        return self.records.get(name)

    @property
    def digests(self) -> Dict[str, str]:
        """Digest of every record read."""
        return {name: record.digest for name, record in self.records.items()}


@attr.s(frozen=True)
class ArtifactWrite:
    """A file a role asks to write, relative to the area of its kind."""

    kind = attr.ib(type=ActionKind, converter=ActionKind)
    name = attr.ib(type=str)
    payload = attr.ib(type=bytes)

    @property
    def path(self) -> str:
        """Return the run-relative path."""
        base = ARTIFACT_DIRS.get(self.kind)
        if base is None:
            raise ScopeViolation(f"{self.kind} is not a write area")
        if self.kind == ActionKind.report:
            return REPORT_FILE
        return f"{base}/{self.name}"


@attr.s(frozen=True)
class RoleResult:
    """Everything a role returns from one dispatch."""

    reportback = attr.ib(type=Reportback)
    writes = attr.ib(type=Tuple[ArtifactWrite, ...], factory=tuple, converter=tuple)
    signal = attr.ib(type=Optional[CompletionSignal], default=None)
    issues = attr.ib(type=Tuple[ReviewIssue, ...], factory=tuple, converter=tuple)
    responses = attr.ib(type=Tuple[Tuple[str, IssueResponse], ...], factory=tuple, converter=tuple)
    verdicts = attr.ib(type=Tuple[Tuple[str, RecheckVerdict], ...], factory=tuple, converter=tuple)
    candidates = attr.ib(type=Tuple[Candidate, ...], factory=tuple, converter=tuple)
    release = attr.ib(type=Optional[ReleaseVerdict], default=None)
    tools = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)


def commit_writes(dispatch: DispatchPacket, writes: Sequence[ArtifactWrite], run_dir: Path) -> List[str]:
    """Write role artifacts into the run directory, refusing anything outside scope.

    Every write is checked before the first file is touched.
    """
    run_dir = Path(run_dir)
    for write in writes:
        if not dispatch.permits(write.kind):
            raise ScopeViolation(f"{write.kind} write {write.name!r} outside the dispatch scope")
        name = PurePosixPath(write.name)
        if name.is_absolute() or ".." in name.parts or not name.parts:
            raise ScopeViolation(f"artifact name {write.name!r} leaves its area")
        if write.kind not in ARTIFACT_DIRS:
            raise ScopeViolation(f"{write.kind} is not a write area")
    written = []
    try:
        for write in writes:
            target = run_dir / write.path
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(target.name + ".tmp")
            tmp.write_bytes(write.payload)
            os.replace(tmp, target)
            written.append(write.path)
    except OSError as e:
        raise UnwritableDirectory(f"{run_dir}: {e}") from None
    logger.debug(f"committed {len(written)} artifacts")
    return written
