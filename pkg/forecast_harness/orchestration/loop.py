"""The governed loop: grounding, expansion, execution under checks, rollback, recheck, completion."""

import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import attr
from attr import define, field

from ..config import HarnessConfig
from ..data.leakage import LeakageVerdict
from ..data.reconstruction import TEST_FILE, TRAIN_FILE, digest
from ..data.summary import AGGREGATE_FIGURE
from ..data.table import UnifiedSeriesTable, ingest_table
from ..errors import BudgetExceeded, MissingRole, StaleDigest
from ..memory.gate import NO_DRIFT, ReleaseVerdict, check_drift, decide
from ..memory.records import (
    RECORD_TYPES,
    CheckStatus,
    CompletionGateRecord,
    CompletionState,
    ContextSnapshot,
    DecisionLedger,
    FeatureLedger,
    Freshness,
    Housekeeping,
    InitialPromptAnchor,
    ProgressLedger,
    TraceEntry,
    TraceRecord,
)
from ..memory.snapshot import derive_snapshot, load_sources, snapshot_freshness
from ..memory.store import MemoryStore
from ..protocol.authority import resolve_authority
from ..protocol.compaction import RunStateView, compaction_due
from ..protocol.events import EVENT_LOG_FILE, EventLog
from ..protocol.lifecycle import HAPPY_PATH, start_lifecycle, walk
from ..protocol.memory_sync import PROPOSAL_TARGETS, absorb_memory_proposal
from ..protocol.rebuttal import RebuttalLedger, answer_issue, open_rebuttal, recheck
from ..protocol.records import (
    ActionKind,
    Autonomy,
    CompletionSignal,
    ContextMode,
    DispatchPacket,
    EventType,
    LifecycleStage,
    MemorySyncProposal,
    SignalKind,
)
from ..protocol.roles import (
    CONSTRUCTOR,
    EVIDENCE_COLLECTOR,
    FINAL_REVIEWER,
    INTERPRETER,
    ORCHESTRATOR,
    TEMPORAL_GOVERNOR,
    RoleId,
)
from ..server.client import TaskServerClient
from ..task.codec import serialize_task_file
from ..task.model import TaskFile, resolve_temporal_constraints
from ..watchdog import BudgetWatchdog
from .branches import BranchTable, StrategyBranch
from .forecasters import read_skeleton
from .report import ArtifactPackage, TraceCollector, TraceStatistics, write_report
from .roles import BACKTEST_FIGURE, OVERLAY_FIGURE, Focus, RolePolicy
from .rollback import CandidateChecks, RunView, detect_rollback
from .workspace import MEMORY_DIR, Candidate, MemoryView, RoleResult, WorkspaceView, commit_writes

logger = logging.getLogger(__name__)

REQUIRED_ROLES = (ORCHESTRATOR, CONSTRUCTOR, TEMPORAL_GOVERNOR, FINAL_REVIEWER)

WORKING_READS = ("anchor", "progress", "decisions", "snapshot")
COMPACTED_READS = ("anchor", "snapshot", "gate")

FIGURE_CLAIMS = {
    AGGREGATE_FIGURE: "public history is regular enough for simple baselines",
    BACKTEST_FIGURE: "local backtest ranks the strategy lines",
    OVERLAY_FIGURE: "the best line continues the recent level",
}


@attr.s(frozen=True)
class RunOutcome:
    """What a governed run leaves behind."""

    final_submission = attr.ib(type=Optional[dict])
    event_log = attr.ib(type=Path)
    memory_dir = attr.ib(type=Path)
    statistics = attr.ib(type=TraceStatistics)
    final_signal = attr.ib(type=CompletionSignal)
    release = attr.ib(type=Optional[ReleaseVerdict], default=None)
    leader = attr.ib(type=Optional[str], default=None)
    rounds = attr.ib(type=int, default=0)


def _path(name: str) -> str:
    return f"{MEMORY_DIR}/{name}.txt"


@define
class GovernedRun:
    """State of one governed run; the orchestrator is this object.

    Role invocations may run concurrently, but every reportback is merged,
    logged and absorbed here one at a time.
    """

    task: TaskFile
    client: TaskServerClient
    roles: Dict[str, RolePolicy]
    config: HarnessConfig
    run_dir: Path
    log: EventLog
    store: MemoryStore
    collector: TraceCollector
    watchdog: BudgetWatchdog
    logger: logging.Logger = field(factory=lambda: logger)

    files: Dict[str, bytes] = field(factory=dict)
    history: Optional[UnifiedSeriesTable] = None
    skeleton: object = None
    surface: object = None
    branches: BranchTable = field(factory=BranchTable)
    candidates: Dict[str, Candidate] = field(factory=dict)
    artifacts: Set[str] = field(factory=set)
    cited: Set[str] = field(factory=set)
    ledger: Optional[RebuttalLedger] = None
    submissions: Dict[str, dict] = field(factory=dict)
    final_artifact: Optional[str] = None
    baseline_artifact: Optional[str] = None
    figure_claims: Dict[str, str] = field(factory=dict)
    rollback_kinds: Tuple[str, ...] = ()
    wave: int = 0
    round: int = 0
    dispatches: int = 0
    reviewed: bool = False
    stop_attempted: bool = False
    strategy_switched: bool = False
    governor_signal: Optional[CompletionSignal] = None
    release: Optional[ReleaseVerdict] = None
    snapshot: Optional[ContextSnapshot] = None

    @property
    def task_id(self) -> str:
        """Identify the task in every event."""
        return f"forecast-{self.task.scope.horizon_start}"

    def _check(self, phase: str):
        self.watchdog.check(phase)

    def _event(self, event_type: EventType, source: RoleId = ORCHESTRATOR, artifacts: Sequence[str] = (),
               **details):
        return self.log.log(event_type, source, self.task_id, details, artifacts)

    # views

    def workspace_view(self) -> WorkspaceView:
        """Return the read-only state handed to roles."""
        return WorkspaceView(
            task=self.task,
            surface=self.surface,
            files=self.files,
            history=self.history,
            skeleton=self.skeleton,
            config=self.config,
            wave=self.wave,
            candidates=self.candidates.values(),
            branches=self.branches,
            artifacts=self.artifacts,
            cited_artifacts=self.cited,
            ledger=self.ledger,
            final_submission=self.submissions.get(self.final_artifact) if self.final_artifact else None,
            baseline_submission=self.submissions.get(self.baseline_artifact) if self.baseline_artifact else None,
            rollback_triggers=self.rollback_kinds,
        )

    def memory_view(self, reads: Sequence[str]) -> MemoryView:
        """Return the records named in ``reads`` as they stand now."""
        records = {}
        for name in reads:
            record = self.store.read(name)
            if record is not None:
                records[name] = record
        return MemoryView(records)

    # dispatch and merge

    def dispatch(self, focus: Focus, objective: str, actions=(), blocking=(), compacted: bool = False,
                 reads: Sequence[str] = WORKING_READS, autonomy: Autonomy = Autonomy.execute_only) -> DispatchPacket:
        """Build a dispatch packet bounded by the task constraints."""
        return DispatchPacket(
            objective=objective,
            known_inputs=sorted(self.files),
            context_mode=ContextMode.compacted if compacted else ContextMode.full,
            explicit_focus=focus,
            required_reads=reads,
            permitted_action_scope=actions,
            constraints=(
                f"read no target after {self.task.constraints.leakage_boundary}",
                f"forecast {self.task.scope.horizon_start}..{self.task.scope.horizon_end}",
            ),
            autonomy_settings=autonomy,
            output_requirements="reportback with cited artifacts",
            blocking_context=blocking,
        )

    async def consult(self, requests: Sequence[Tuple[RoleId, DispatchPacket]]) -> List[Optional[RoleResult]]:
        """Run the requested roles concurrently and merge their results in order.

        A role without a policy yields None.
        """
        opened = []
        for role, packet in requests:
            policy = self.roles.get(str(role))
            if policy is None:
                self.logger.debug(f"no policy for {role}, skipping {packet.explicit_focus}")
                opened.append(None)
                continue
            self.dispatches += 1
            dispatch_id = f"d{self.dispatches}"
            self._event(EventType.dispatch_creation, dispatch=dispatch_id, role=role, focus=packet.explicit_focus,
                        round=self.round, mode=packet.context_mode)
            opened.append((dispatch_id, role, policy, packet, self.memory_view(packet.required_reads)))

        workspace = self.workspace_view()
        results = await asyncio.gather(*[
            self._act(item[2], item[3], workspace, item[4]) for item in opened if item is not None
        ])
        merged, it = [], iter(results)
        for item in opened:
            if item is None:
                merged.append(None)
                continue
            dispatch_id, role, _, packet, memory = item
            merged.append(self._receive(dispatch_id, role, packet, memory, next(it)))
        return merged

    @staticmethod
    async def _act(policy: RolePolicy, packet: DispatchPacket, workspace: WorkspaceView,
                   memory: MemoryView) -> Tuple[RoleResult, Tuple[LifecycleStage, ...]]:
        state = walk(start_lifecycle(), HAPPY_PATH[:3], "dispatch accepted")
        result = await policy.act(packet, workspace, memory)
        state = walk(state, HAPPY_PATH[3:], "work slice finished")
        return result, state.history

    def _receive(self, dispatch_id: str, role: RoleId, packet: DispatchPacket, memory: MemoryView,
                 acted: Tuple[RoleResult, Tuple[LifecycleStage, ...]]) -> RoleResult:
        result, stages = acted
        written = commit_writes(packet, result.writes, self.run_dir)
        self.artifacts.update(written)
        reportback = result.reportback
        self.cited.update(reportback.cited_artifacts)
        for write in result.writes:
            if write.name in FIGURE_CLAIMS:
                self.figure_claims[write.path] = FIGURE_CLAIMS[write.name]
        self._event(
            EventType.reportback_receipt,
            source=role,
            artifacts=written,
            dispatch=dispatch_id,
            status=reportback.status,
            stages=">".join(str(s) for s in stages),
            blockers=reportback.open_blockers,
            tools=result.tools,
            next_role=reportback.suggested_next_role,
        )
        for proposal in reportback.suggested_memory_updates:
            self.absorb(proposal, memory)
        if result.signal is not None and result.signal.kind == SignalKind.allow_stop and self.ledger is not None \
                and self.ledger.blocked:
            self.stop_attempted = True
        return result

    def absorb(self, proposal: MemorySyncProposal, memory: MemoryView):
        """Absorb one memory proposal against the version its proposer read."""
        target = PROPOSAL_TARGETS[proposal.kind]
        if target not in RECORD_TYPES or target == ContextSnapshot.NAME:
            self._event(EventType.artifact_synchronization, source=proposal.proposer, proposal=proposal.kind,
                        outcome="logged", content=proposal.content)
            return
        current = self.store.read(target) or RECORD_TYPES[target]()
        read = memory.get(target)
        try:
            decision = absorb_memory_proposal(proposal, current, read.digest if read is not None else current.digest)
        except StaleDigest as e:
            self.logger.warning(f"proposal from {proposal.proposer} refused: {e}")
            self._event(EventType.artifact_synchronization, source=proposal.proposer, proposal=proposal.kind,
                        outcome="stale", target=target)
            return
        self.store.apply(proposal, decision)
        self._event(EventType.artifact_synchronization, source=proposal.proposer,
                    artifacts=[_path(target)] if decision.accepted else (),
                    proposal=proposal.kind, outcome=decision.outcome, target=target, reason=decision.reason)

    # memory

    def _update_decisions(self, *decisions: Tuple[str, str, str]):
        ledger = self.store.read("decisions") or DecisionLedger()
        known = {d for d, _, _ in ledger.decisions}
        added = tuple(d for d in decisions if d[0] not in known)
        alignment = self.branches.to_alignment()
        self.store.write(attr.evolve(ledger, decisions=ledger.decisions + added, alignment=alignment))

    def _update_progress(self, focus: str, completed: Sequence[str] = (), suggested=()):
        self.store.write(ProgressLedger(current_focus=focus, completed_this_round=completed, suggested_next=suggested))

    def refresh_snapshot(self, phase: str, triggers=()) -> ContextSnapshot:
        """Derive a new snapshot from the current sources and log the compaction."""
        sources = load_sources(self.store, self.ledger.open_issue_ids if self.ledger else ())
        self.snapshot = derive_snapshot(sources, phase)
        self.store.write(self.snapshot)
        self._event(EventType.context_compaction, artifacts=[_path("snapshot")], phase=phase,
                    triggers=sorted(str(t) for t in triggers) or ["refresh"])
        return self.snapshot

    def _snapshot_fresh(self) -> bool:
        if self.snapshot is None:
            return False
        sources = load_sources(self.store, self.ledger.open_issue_ids if self.ledger else ())
        return snapshot_freshness(self.snapshot, sources) == Freshness.fresh

    def _compact_if_due(self, phase: str, **state):
        due = compaction_due(RunStateView(workspace_initialized=True, snapshot_since_initialization=True,
                                          snapshot_fresh=self._snapshot_fresh(), **state))
        if due:
            self.refresh_snapshot(phase, due)

    # phases

    async def ground(self):
        """Download the workspace, record the anchor and ground the task."""
        listing = await self.client.list_files()
        for entry in listing:
            self.files[entry["name"]] = await self.client.download(entry["name"])
        self._event(EventType.repository_initialization, artifacts=sorted(self.files), files=len(self.files))
        self.history = ingest_table(self.files[TRAIN_FILE], timezone=self.task.scope.timezone).history(
            self.task.scope.cutoff,
        )
        self.skeleton = read_skeleton(self.files[TEST_FILE])
        self.surface = resolve_temporal_constraints(self.task)

        boundary = self.task.constraints.leakage_boundary
        goals = self.goals()
        self.store.record_anchor(InitialPromptAnchor(
            original_prompt=serialize_task_file(self.task),
            goals=goals,
            metrics=[str(m.metric_id) for m in self.task.metrics],
            non_goals=[f"use targets after {boundary}", "consult external data"],
        ))
        self.store.write(FeatureLedger(planned=[(goal, str(CONSTRUCTOR), "not started") for goal in goals]))
        self._update_progress("grounding")
        self._update_decisions()
        self.store.write(CompletionGateRecord())
        for record in ("anchor", "features", "progress", "decisions", "gate"):
            self._event(EventType.artifact_synchronization, artifacts=[_path(record)], record=record)

        await self.consult([
            (INTERPRETER, self.dispatch(Focus.grounding, "summarise the public history and its constraints",
                                        actions=[ActionKind.figures])),
            (EVIDENCE_COLLECTOR, self.dispatch(Focus.evidence, "list the local evidence")),
        ])
        self._update_progress("expansion", completed=["grounding"])
        self.refresh_snapshot("grounding", compaction_due(RunStateView(workspace_initialized=True)))
        self._event(EventType.checkpoint_creation, checkpoint="grounded")

    def goals(self) -> Tuple[str, ...]:
        """Return the anchor goals of the task."""
        scope = self.task.scope
        return (
            f"submit an admissible forecast for {scope.horizon_start}..{scope.horizon_end}",
            f"read no target after {self.task.constraints.leakage_boundary}",
            "compare the submission against the median baseline",
        )

    async def expand(self, blocking: Sequence[str] = ()):
        """Ask the constructor for strategy lines and record them as branches."""
        packet = self.dispatch(Focus.expansion, f"propose strategy lines for wave {self.wave}",
                               actions=[ActionKind.submissions, ActionKind.figures], blocking=blocking,
                               autonomy=Autonomy.may_reframe)
        result, = await self.consult([(CONSTRUCTOR, packet)])
        for candidate in result.candidates:
            evidence = [candidate.submission]
            if self.branches.get(candidate.name) is None:
                self.branches.open(StrategyBranch(
                    branch_id=candidate.name,
                    wave=self.wave,
                    description=candidate.description,
                    comparison_point="local rmsle against the median baseline",
                    leakage_verdict=candidate.verdict,
                    revisions=[evidence],
                ))
            else:
                self.branches.revise(candidate.name, evidence, verdict=candidate.verdict)
            self.candidates[candidate.name] = candidate

        decisions = []
        active = self.branches.active(self.wave)
        if self.wave == 0 and len(active) < 2:
            self.logger.warning(f"only {len(active)} strategy line open in wave 0")
            decisions.append(("continue with a single wave-0 line", "constructor proposed one line", "low"))
        self._update_decisions(*decisions)
        self._update_progress("execution", completed=[f"expansion wave {self.wave}"], suggested=[
            (f"score {c.name}", c.submission) for c in result.candidates
        ])

    def _ranking_score(self, candidate: Candidate) -> Optional[float]:
        record = self.submissions.get(candidate.submission)
        if record is not None and record["admissible"] and record["digest"] == candidate.payload_digest:
            return record["primary_score"]
        return candidate.local_score

    async def execute(self):
        """Promote the best eligible line and submit it with the baseline."""
        eligible = []
        for branch in self.branches.active():
            candidate = self.candidates.get(branch.branch_id)
            if candidate is None or branch.leakage_verdict == LeakageVerdict.invalid:
                continue
            score = self._ranking_score(candidate)
            if score is not None:
                eligible.append((score, candidate.name))
        if not eligible:
            self.logger.warning("no leakage-valid scored line to lead")
            return
        _, best = min(eligible)
        previous = self.branches.leading
        if previous is None or previous.branch_id != best:
            self.branches.promote(best)
            self.strategy_switched = previous is not None
            self._update_decisions((f"lead with {best}", "best score among valid lines", "medium"))

        leader = self.candidates[best]
        self.final_artifact = await self.submit(leader)
        baseline = next((c for c in self.candidates.values() if c.baseline and self.branches.get(c.name).active), None)
        if baseline is not None and baseline.name != best:
            self.baseline_artifact = await self.submit(baseline)
        elif baseline is not None:
            self.baseline_artifact = self.final_artifact

    async def submit(self, candidate: Candidate) -> str:
        """Send a candidate's submission once per payload; return its artifact path."""
        path = candidate.submission
        record = self.submissions.get(path)
        if record is not None and record["digest"] == candidate.payload_digest:
            return path
        payload = (self.run_dir / path).read_bytes()
        record = await self.client.submit(payload, f"{self.config.submission_label}/{candidate.name}")
        record = dict(record, artifact=path, digest=digest(payload))
        self.submissions[path] = record
        level = logging.INFO if record["admissible"] else logging.WARNING
        self.logger.log(level, f"submitted {candidate.name}: #{record['id']} admissible={record['admissible']} "
                               f"score={record['primary_score']}")
        self._event(EventType.artifact_synchronization, artifacts=[path], submission=record["id"],
                    admissible=record["admissible"], score=record["primary_score"])
        return path

    async def review(self):
        """Let the temporal governor review the strategy lines once."""
        leader = self.branches.leading
        self.ledger = self.ledger or RebuttalLedger(leader.branch_id if leader is not None else "strategy lines")
        result, = await self.consult([(TEMPORAL_GOVERNOR, self.dispatch(Focus.review, "review the strategy lines"))])
        self.reviewed = True
        self.governor_signal = result.signal
        if result.issues:
            self.ledger = open_rebuttal(self.ledger, result.issues)
            for issue in result.issues:
                self._event(EventType.rebuttal_opening, source=issue.raised_by, issues=[issue.issue_id],
                            text=issue.text)
            self._compact_if_due("review", review_loop_opened=True)

    async def respond(self):
        """Have the constructor answer every open issue."""
        if self.ledger is None or not self.ledger.blocked:
            return
        packet = self.dispatch(Focus.rebuttal, "answer the open review issues", actions=[ActionKind.rebuttals],
                               blocking=self.ledger.open_issue_ids)
        result, = await self.consult([(CONSTRUCTOR, packet)])
        for issue_id, response in result.responses:
            self.ledger = answer_issue(self.ledger, issue_id, response)
        self.ledger.write_documents(self.run_dir)

    def run_view(self) -> RunView:
        """Collect the facts the rollback triggers read."""
        active = [self.candidates[b.branch_id] for b in self.branches.active() if b.branch_id in self.candidates]
        baseline_scored = any(c.baseline and c.local_score is not None for c in active)
        return RunView(
            branches=self.branches,
            artifacts=self.artifacts,
            cited_artifacts=self.cited,
            candidates={c.name: CandidateChecks(c.local_score is not None, baseline_scored) for c in active},
            unresolved_constraints=self.surface.unresolved,
            stop_attempted=self.stop_attempted,
            open_blockers=self.ledger.open_issue_ids if self.ledger else (),
            fixation_threshold=self.config.fixation_threshold,
        )

    async def rollback(self) -> bool:
        """Re-enter expansion when a rollback trigger fires."""
        triggers = detect_rollback(self.run_view())
        self.rollback_kinds = tuple(sorted({str(t.kind) for t in triggers}))
        if not triggers:
            return False
        evidence = "; ".join(sorted(f"{t.kind}: {t.evidence}" for t in triggers))
        self.logger.info(f"rollback: {evidence}")
        for branch in self.branches.active():
            if branch.leakage_verdict == LeakageVerdict.invalid:
                self.branches.abandon(branch.branch_id, "leakage-invalid without fallback")
        self.wave += 1
        self.stop_attempted = False
        self._update_decisions((f"re-enter expansion at wave {self.wave}", evidence, "high"))
        self._event(EventType.checkpoint_creation, checkpoint=f"rollback-wave-{self.wave}",
                    triggers=self.rollback_kinds)
        blocking = self.rollback_kinds + (self.ledger.open_issue_ids if self.ledger else ())
        await self.expand(blocking)
        self.rollback_kinds = ()
        self._compact_if_due("rollback", strategy_switched=True)
        return True

    async def recheck(self):
        """Let the temporal governor recheck every answered issue."""
        if self.ledger is None:
            return
        pending = [i for i in self.ledger.open_issue_ids if self.ledger.thread(i).recheck_pending]
        if not pending:
            return
        result, = await self.consult([
            (TEMPORAL_GOVERNOR, self.dispatch(Focus.recheck, "recheck the answered issues", blocking=pending)),
        ])
        for issue_id, verdict in result.verdicts:
            self.ledger = recheck(self.ledger, issue_id, verdict)
            self._event(EventType.rebuttal_review, source=verdict.issued_by, artifacts=[f"rebuttals/{issue_id}.txt"],
                        issue=issue_id, resolved=verdict.resolved, signal=verdict.completion_signal)
        self.governor_signal = result.signal
        self.ledger.write_documents(self.run_dir)

    def _delivered_goals(self) -> List[str]:
        goals = self.goals()
        final = self.submissions.get(self.final_artifact) if self.final_artifact else None
        leader = self.branches.leading
        delivered = []
        if final is not None and final["admissible"]:
            delivered.append(goals[0])
        if leader is not None and leader.leakage_verdict != LeakageVerdict.invalid:
            delivered.append(goals[1])
        if self.baseline_artifact in self.submissions:
            delivered.append(goals[2])
        return delivered

    def _gate_draft(self) -> CompletionGateRecord:
        active = [self.candidates[b.branch_id] for b in self.branches.active() if b.branch_id in self.candidates]
        final = self.submissions.get(self.final_artifact) if self.final_artifact else None
        open_issues = self.ledger.open_issue_ids if self.ledger else ()
        governor = self.governor_signal

        def status(passed: bool) -> CheckStatus:
            return CheckStatus.passed if passed else CheckStatus.failed

        checks = {
            "brainstorm": status(len(self.branches.branches) >= 2),
            "deep_reasoning": status(not self.surface.unresolved and all(c.local_score is not None for c in active)),
            "critic_loop": status(self.reviewed and not open_issues),
            "temporal_governor": status(governor is not None and governor.kind == SignalKind.allow_stop),
            "final_reviewer": CheckStatus.pending,
        }
        remaining = len(open_issues) + (0 if final is not None and final["admissible"] else 1)
        delivered = self._delivered_goals()
        feature_goals = set(delivered)
        self.store.write(FeatureLedger(
            delivered=[(goal, self.final_artifact or "-") for goal in delivered],
            planned=[(goal, str(CONSTRUCTOR), "not delivered") for goal in self.goals() if goal not in feature_goals],
        ))
        return CompletionGateRecord(
            pre_stop_checks=checks,
            initial_prompt_drift=check_drift(self.goals(), delivered),
            role_challenges=[(str(TEMPORAL_GOVERNOR), governor is not None and governor.kind == SignalKind.allow_stop,
                              governor.reasons if governor is not None else "no review")],
            remaining_action_count=remaining,
            completion_state=CompletionState.complete if remaining == 0 else CompletionState.incomplete,
            housekeeping=Housekeeping(cleanup_done=True, kept_with_reason=[
                ("submissions", "every candidate submission backs a reported score"),
            ]),
        )

    def _write_gate(self, gate: CompletionGateRecord, phase: str) -> CompletionGateRecord:
        self.store.write(gate)
        self.refresh_snapshot(phase, compaction_due(RunStateView(
            workspace_initialized=True, snapshot_since_initialization=True, final_review_queued=True,
            snapshot_fresh=self._snapshot_fresh(),
        )))
        sources = load_sources(self.store, self.ledger.open_issue_ids if self.ledger else ())
        gate = attr.evolve(gate, snapshot_freshness=snapshot_freshness(self.snapshot, sources))
        self.store.write(gate)
        return gate

    async def complete(self) -> CompletionSignal:
        """Run the completion gate and resolve the binding signal."""
        self._update_progress("completion", completed=[f"round {self.round} checks"])
        gate = self._write_gate(self._gate_draft(), "completion")
        if gate.initial_prompt_drift != NO_DRIFT:
            self.logger.info(f"prompt drift: {gate.initial_prompt_drift}")

        governor, reviewer = await self.consult([
            (TEMPORAL_GOVERNOR, self.dispatch(Focus.completion, "confirm temporal validity")),
            (FINAL_REVIEWER, self.dispatch(Focus.completion, "judge whether the run may stop", compacted=True,
                                           reads=COMPACTED_READS)),
        ])
        self.governor_signal = governor.signal
        self.release = reviewer.release
        checks = dict(gate.pre_stop_checks)
        checks["final_reviewer"] = (
            CheckStatus.passed if reviewer.signal.kind == SignalKind.allow_stop else CheckStatus.failed
        )
        gate = decide(self._write_gate(attr.evolve(gate, pre_stop_checks=checks), "final review"))
        self.store.write(gate)
        self._event(EventType.completion_gate_update, artifacts=[_path("gate")],
                    stop_permission=gate.stop_permission, reason=gate.reason)

        orchestrator, = await self.consult([
            (ORCHESTRATOR, self.dispatch(Focus.completion, "issue the run signal", reads=("gate",))),
        ])
        signals = [s for s in (reviewer.signal, governor.signal, orchestrator.signal) if s is not None]
        binding = resolve_authority(signals)
        if binding.kind == SignalKind.allow_stop and not gate.stop_permission:
            self.logger.warning(f"{binding.issued_by} allowed a stop the gate refused")
            binding = orchestrator.signal
        self._event(EventType.stop_go_signal, source=binding.issued_by, kind=binding.kind,
                    reasons=binding.reasons)
        return binding

    def trace(self, goal: str, signal: Optional[CompletionSignal], scope: Sequence[str]):
        """Append one round to the task trace."""
        record = self.store.read("trace") or TraceRecord()
        final = self.submissions.get(self.final_artifact) if self.final_artifact else None
        entry = TraceEntry(
            goal=goal,
            self_review=self.governor_signal.reasons if self.governor_signal else "no review yet",
            change_scope=", ".join(scope) or "none",
            verification=f"final score {final['primary_score']}" if final else "nothing submitted",
            follow_up=(signal.next_action or "") if signal is not None else "",
        )
        self.store.write(attr.evolve(record, rounds=record.rounds + (entry,)))

    async def run(self) -> CompletionSignal:
        """Drive the phases until a resolved allow_stop or the budget ends."""
        await self.ground()
        self._check("grounding")
        await self.expand()
        self._check("expansion")
        for round_number in range(1, self.config.max_rounds + 1):
            self.round = round_number
            before = set(self.artifacts)
            await self.execute()
            self._compact_if_due("execution", strategy_switched=self.strategy_switched)
            self.strategy_switched = False
            if not self.reviewed:
                await self.review()
            await self.respond()
            self._check("review")
            if await self.rollback():
                self.trace(f"round {self.round}: rollback to wave {self.wave}", None, sorted(self.artifacts - before))
                continue
            await self.recheck()
            self._check("recheck")
            if self.ledger is not None and self.ledger.blocked:
                self.trace(f"round {self.round}: issues still open", self.governor_signal,
                           sorted(self.artifacts - before))
                continue
            signal = await self.complete()
            self.trace(f"round {self.round}: completion", signal, sorted(self.artifacts - before))
            self._check("completion")
            if signal.kind == SignalKind.allow_stop:
                self.branches.merge_leader()
                self._update_decisions()
                return signal
        raise BudgetExceeded(f"no allow_stop within {self.config.max_rounds} rounds")


def check_roles(roles: Mapping[str, RolePolicy]):
    """Raise :class:`MissingRole` for the first mandatory role without a policy."""
    for role in REQUIRED_ROLES:
        if str(role) not in roles:
            raise MissingRole(str(role))


async def run_governed_loop(task: TaskFile, endpoint: str, roles: Mapping[str, RolePolicy], config: HarnessConfig,
                            run_dir: Path, client: Optional[TaskServerClient] = None,
                            command: str = "forecast-harness run") -> RunOutcome:
    """Run the governed loop against the competition endpoint.

    ``roles`` maps role names to policies; orchestrator, constructor,
    temporal_governor and final_reviewer are mandatory.
    """
    check_roles(roles)
    run_dir = Path(run_dir)
    memory_dir = run_dir / MEMORY_DIR
    log = EventLog(run_dir / EVENT_LOG_FILE)
    collector = TraceCollector(log)
    client = client or TaskServerClient(endpoint, http_timeout=config.http_timeout, http_retries=config.http_retries)
    run = GovernedRun(
        task=task,
        client=client,
        roles=dict(roles),
        config=config,
        run_dir=run_dir,
        log=log,
        store=MemoryStore(memory_dir, logger.getChild("memory")),
        collector=collector,
        watchdog=BudgetWatchdog(config.time_budget),
    )
    logger.info(f"governed run for {run.task_id} in {run_dir}")
    try:
        with run.watchdog:
            async with client:
                signal = await run.run()
                leaderboard = await client.leaderboard()
    except BudgetExceeded as e:
        logger.error(f"run stopped: {e}")
        write_report(run_dir, _package(run, command, f"stopped: {e}", ()))
        raise

    statistics = collector.statistics
    final = run.submissions.get(run.final_artifact) if run.final_artifact else None
    write_report(run_dir, _package(run, command, f"{signal.kind} by {signal.issued_by}: {signal.reasons}",
                                   leaderboard))
    leader = run.final_artifact and next(
        (c.name for c in run.candidates.values() if c.submission == run.final_artifact), None,
    )
    logger.info(f"run finished after {run.round} rounds, final {final['primary_score'] if final else None}")
    return RunOutcome(
        final_submission=final,
        event_log=log.path,
        memory_dir=memory_dir,
        statistics=statistics,
        final_signal=signal,
        release=run.release,
        leader=leader,
        rounds=run.round,
    )


def _package(run: GovernedRun, command: str, outcome: str, leaderboard) -> ArtifactPackage:
    return ArtifactPackage(
        task=run.task,
        config=run.config,
        command=command,
        outcome=outcome,
        statistics=run.collector.statistics,
        submissions=run.submissions,
        final_artifact=run.final_artifact,
        baseline_artifact=run.baseline_artifact,
        leaderboard=leaderboard,
        local_scores={c.name: c.local_score for c in run.candidates.values()},
        figure_claims=run.figure_claims,
    )
