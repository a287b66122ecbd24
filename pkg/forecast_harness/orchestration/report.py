"""Trace statistics and the experiment artifact package."""

import datetime
import logging
import os
import platform
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import attr
import psutil

from ..config import HarnessConfig
from ..errors import UnwritableDirectory
from ..protocol.events import EVENT_LOG_FILE, EventLog, EventLogEvents, RuntimeEvent, read_events
from ..protocol.records import EventType
from ..task.model import TaskFile
from .workspace import FIGURES_DIR, REPORT_FILE

logger = logging.getLogger(__name__)

FIGURE_SUFFIX = ".png"
MEBIBYTE = 1024 * 1024


@attr.s(frozen=True)
class TraceStatistics:
    """Run summary in the shape of a comparison table row."""

    runtime = attr.ib(type=float)  # seconds
    unique_tools = attr.ib(type=int)
    touched_files = attr.ib(type=int)
    review_blocks = attr.ib(type=int)
    critique_rounds = attr.ib(type=int)
    figures_produced = attr.ib(type=int)
    rounds = attr.ib(type=int, default=0)

    def rows(self) -> List[Tuple[str, str]]:
        """Return ``(label, value)`` rows."""
        return [
            ("Runtime (s)", f"{self.runtime:.1f}"),
            ("Unique tools", str(self.unique_tools)),
            ("Touched files", str(self.touched_files)),
            ("Review blocks", str(self.review_blocks)),
            ("Critique rounds", str(self.critique_rounds)),
            ("Figures produced", str(self.figures_produced)),
            ("Rounds", str(self.rounds)),
        ]

    def to_table(self) -> str:
        """Render as a two-column text table."""
        rows = self.rows()
        width = max(len(label) for label, _ in rows)
        return "".join(f"{label.ljust(width)}  {value}\n" for label, value in rows)


def statistics_from_events(events: Sequence[RuntimeEvent]) -> TraceStatistics:
    """Derive trace statistics from an event sequence."""
    tools, touched, rounds = set(), set(), set()
    blocks = critiques = 0
    for event in events:
        details = event.details
        touched.update(event.affected_artifacts)
        if event.event_type == EventType.reportback_receipt:
            tools.update(t for t in details.get("tools", "").split(",") if t)
        elif event.event_type == EventType.dispatch_creation and details.get("round", "0") != "0":
            rounds.add(details["round"])
        elif event.event_type == EventType.rebuttal_opening:
            blocks += 1
        elif event.event_type == EventType.rebuttal_review:
            critiques += 1
    runtime = (events[-1].timestamp - events[0].timestamp).total_seconds() if events else 0.0
    return TraceStatistics(
        runtime=runtime,
        unique_tools=len(tools),
        touched_files=len(touched),
        review_blocks=blocks,
        critique_rounds=critiques,
        figures_produced=sum(1 for path in touched if path.endswith(FIGURE_SUFFIX)),
        rounds=len(rounds),
    )


class TraceCollector:
    """Listens to an event log and keeps the events seen so far."""

    def __init__(self, log: Optional[EventLog] = None):
        """Subscribe to ``log`` when given."""
        self.events: List[RuntimeEvent] = []
        if log is not None:
            self.attach(log)

    def attach(self, log: EventLog):
        """Subscribe to the appended events of ``log``."""
        log.events.on(EventLogEvents.appended, self.observe)

    def observe(self, event: RuntimeEvent):
        """Record one appended event."""
        self.events.append(event)

    @property
    def statistics(self) -> TraceStatistics:
        """Statistics over the events seen so far."""
        return statistics_from_events(self.events)


def environment_note() -> str:
    """Describe the machine the run executed on."""
    memory = psutil.virtual_memory()
    rss = psutil.Process(os.getpid()).memory_info().rss
    return (
        f"python {platform.python_version()} on {platform.system()} {platform.machine()}, "
        f"{psutil.cpu_count(logical=False) or psutil.cpu_count()} cores, "
        f"{memory.total // MEBIBYTE} MiB memory, process rss {rss // MEBIBYTE} MiB"
    )


def _section(title: str, lines: Iterable[str]) -> str:
    body = "".join(f"  {line}\n" for line in lines)
    return f"[{title}]\n" + (body or "  none\n") + "\n"


def _score(record: Optional[Mapping]) -> str:
    if record is None:
        return "not submitted"
    score = record.get("primary_score")
    return f"#{record['id']} {'admissible' if record['admissible'] else 'inadmissible'}, " + (
        f"score {score:.6f}" if score is not None else "unscored"
    )


@attr.s(frozen=True)
class ArtifactPackage:
    """Everything needed to rerun and audit one governed run."""

    task = attr.ib(type=TaskFile)
    config = attr.ib(type=HarnessConfig)
    command = attr.ib(type=str)
    outcome = attr.ib(type=str)
    statistics = attr.ib(type=TraceStatistics)
    submissions = attr.ib(type=Dict[str, dict], factory=dict)  # artifact path -> server record
    final_artifact = attr.ib(type=Optional[str], default=None)
    baseline_artifact = attr.ib(type=Optional[str], default=None)
    leaderboard = attr.ib(type=Tuple[dict, ...], factory=tuple, converter=tuple)
    local_scores = attr.ib(type=Dict[str, Optional[float]], factory=dict)
    figure_claims = attr.ib(type=Dict[str, str], factory=dict)  # figure path -> claim it backs
    finished_at = attr.ib(type=datetime.datetime, factory=lambda: datetime.datetime.now(datetime.timezone.utc))

    def to_text(self) -> str:
        """Render the package as ``report.txt``."""
        scope = self.task.scope
        settings = self.config.to_dict()
        final = self.submissions.get(self.final_artifact) if self.final_artifact else None
        baseline = self.submissions.get(self.baseline_artifact) if self.baseline_artifact else None
        return "".join([
            _section("configuration", [
                f"history = {scope.history_start}..{scope.history_end}",
                f"horizon = {scope.horizon_start}..{scope.horizon_end} ({scope.step_count} steps)",
                f"leakage_boundary = {self.task.constraints.leakage_boundary}",
                "split = public history up to the cutoff, sealed truth after it",
                f"seed = {settings['seed']}",
                f"methods = median window {settings['median_window']}, ses alpha {settings['ses_alpha']}, "
                f"lag {settings['lag_steps']}",
                f"budget = {settings['time_budget']}s, {settings['max_rounds']} rounds",
            ]),
            _section("execution", [
                f"command = {self.command}",
                f"environment = {environment_note()}",
                f"outcome = {self.outcome}",
                f"finished_at = {self.finished_at.isoformat()}",
                f"rerun = {self.command}",
            ]),
            _section("scored outputs", [
                f"{path}: {_score(record)}" for path, record in sorted(self.submissions.items())
            ] + [
                f"final = {self.final_artifact or '-'} ({_score(final)})",
                f"baseline = {self.baseline_artifact or '-'} ({_score(baseline)})",
            ] + [
                f"local {name} = {value:.6f}" if value is not None else f"local {name} = unscored"
                for name, value in sorted(self.local_scores.items())
            ] + [
                f"leaderboard {n}: {row['submitter']} {row['score']:.6f} (#{row['submission_id']})"
                for n, row in enumerate(self.leaderboard, start=1)
            ]),
            _section("diagnosis artifacts", sorted(self.figure_claims)),
            _section("report binding", [f"{path} -> {claim}" for path, claim in sorted(self.figure_claims.items())]),
            "[trace statistics]\n",
            self.statistics.to_table(),
        ])


def write_report(run_dir: Path, package: ArtifactPackage) -> Path:
    """Write the artifact package into the run directory."""
    path = Path(run_dir) / REPORT_FILE
    try:
        path.write_text(package.to_text(), encoding="utf-8")
    except OSError as e:
        raise UnwritableDirectory(f"{run_dir}: {e}") from None
    logger.info(f"report written to {path}")
    return path


def render_report(run_dir: Path) -> str:
    """Render the trace statistics and figure index of a finished run."""
    run_dir = Path(run_dir)
    events = read_events(run_dir / EVENT_LOG_FILE)
    figures = sorted(p.relative_to(run_dir).as_posix() for p in (run_dir / FIGURES_DIR).glob(f"*{FIGURE_SUFFIX}"))
    index = "".join(f"  {name}\n" for name in figures) or "  none\n"
    return statistics_from_events(events).to_table() + "figures:\n" + index
