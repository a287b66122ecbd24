"""Role policies: the contract plus the scripted, deterministic roles."""

import abc
import asyncio
import functools
import logging
import tempfile
from enum import auto
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import attr
import pandas as pd
from strenum import StrEnum

from ..config import HarnessConfig
from ..data.leakage import LeakageVerdict
from ..data.reconstruction import digest
from ..data.summary import visual_summary
from ..data.table import DATE, TARGET
from ..figures import bar_figure, line_figure, png_bytes
from ..memory.gate import ReleaseThresholds, evaluate_completion_gate, evaluate_release_gate
from ..memory.records import CheckStatus
from ..protocol.records import (
    AcceptanceStatus,
    ActionKind,
    CompletionSignal,
    DispatchPacket,
    IssueResponse,
    LifecycleStage,
    MemorySyncProposal,
    ProposalKind,
    RecheckVerdict,
    Reportback,
    ReviewIssue,
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
from .backtest import run_backtests
from .forecasters import median_baseline_forecast, ses_forecast, to_submission, weekday_lag_forecast
from .workspace import FIGURES_DIR, ArtifactWrite, Candidate, CandidateSpec, MemoryView, RoleResult, WorkspaceView

BACKTEST_FIGURE = "backtest_scores.png"
OVERLAY_FIGURE = "forecast_overlay.png"
OVERLAY_HISTORY_DAYS = 28

LEAKAGE_ISSUE = "temporal-leakage"
CITATION_ISSUE = "uncited-figure"
BASELINE_ISSUE = "missing-baseline"


class Focus(StrEnum):
    """What a dispatch asks a role to work on."""

    grounding = auto()
    evidence = auto()
    expansion = auto()
    review = auto()
    rebuttal = auto()
    recheck = auto()
    completion = auto()


def _median(config: HarnessConfig):
    return lambda table, scope: (median_baseline_forecast(table, scope, config.median_window), None)


def _ses(config: HarnessConfig):
    return lambda table, scope: (ses_forecast(table, scope, config.ses_alpha), None)


def _weekday_lag(config: HarnessConfig, with_fallback: bool):
    fallback = functools.partial(median_baseline_forecast, window=config.median_window) if with_fallback else None
    return lambda table, scope: weekday_lag_forecast(table, scope, fallback, config.lag_steps)


CANDIDATE_SPECS = {
    "median": CandidateSpec("median", "recent-week median per series", _median, baseline=True),
    "ses": CandidateSpec("ses", "simple exponential smoothing", _ses),
    "weekday_lag": CandidateSpec(
        "weekday_lag", "same weekday one week back", functools.partial(_weekday_lag, with_fallback=False),
    ),
    "weekday_lag_fallback": CandidateSpec(
        "weekday_lag_fallback",
        "same weekday one week back, median where the lag reaches past the cutoff",
        functools.partial(_weekday_lag, with_fallback=True),
        has_fallback=True,
    ),
}
DEFAULT_CANDIDATES = ("median", "ses", "weekday_lag_fallback")


def default_candidates() -> Tuple[CandidateSpec, ...]:
    """Return the constructor's default strategy lines."""
    return tuple(CANDIDATE_SPECS[name] for name in DEFAULT_CANDIDATES)


def finished(work: str, next_step: str, next_role: RoleId, **kwargs) -> Reportback:
    """Build the reportback of a completed work slice."""
    kwargs.setdefault("remaining_gaps", ())
    kwargs.setdefault("new_risks", ())
    kwargs.setdefault("suggested_memory_updates", ())
    kwargs.setdefault("suggested_rule_or_protocol_updates", ())
    kwargs.setdefault("follow_up_actions", ())
    kwargs.setdefault("can_continue_alone", False)
    kwargs.setdefault("self_critique", "")
    return Reportback(
        status=LifecycleStage.completion,
        completed_work=work,
        suggested_next_step=next_step,
        suggested_next_role=next_role,
        **kwargs,
    )


@attr.s
class RolePolicy(abc.ABC):
    """A role's behaviour behind the dispatch contract.

    A policy may only write inside its dispatch's permitted action scope;
    the orchestrator enforces this when it commits the writes.
    """

    ROLE: RoleId = None

    logger = attr.ib(type=logging.Logger, factory=lambda: logging.getLogger(__name__))

    @property
    def role(self) -> RoleId:
        """Return the role this policy plays."""
        return self.ROLE

    @abc.abstractmethod
    async def act(self, dispatch: DispatchPacket, workspace: WorkspaceView, memory: MemoryView) -> RoleResult:
        """Work one dispatch and report back."""

    def idle(self, dispatch: DispatchPacket) -> RoleResult:
        """Answer a dispatch whose focus this role does not handle."""
        return RoleResult(reportback=finished(
            f"no work for focus {dispatch.explicit_focus}", "continue", ORCHESTRATOR,
        ))


@attr.s
class ScriptedOrchestrator(RolePolicy):
    """Signals stop exactly when the completion gate granted it."""

    ROLE = ORCHESTRATOR

    async def act(self, dispatch, workspace, memory):
        """Issue the orchestrator's completion signal."""
        if dispatch.explicit_focus != Focus.completion:
            return self.idle(dispatch)
        gate = memory.get("gate")
        permitted = gate is not None and gate.stop_permission
        if permitted:
            signal = CompletionSignal(
                kind=SignalKind.allow_stop,
                reasons=gate.reason,
                scope="run",
                issued_by=self.role,
                completion_checks={"completion_gate": True},
                remaining_action_count=0,
                complete_state=True,
            )
        else:
            signal = CompletionSignal(
                kind=SignalKind.continue_,
                reasons=gate.reason if gate is not None else "no completion gate record",
                scope="run",
                issued_by=self.role,
                next_action="another execution round",
                completion_checks={"completion_gate": False},
                remaining_action_count=1,
            )
        return RoleResult(
            reportback=finished(f"completion gate {'passed' if permitted else 'refused'}", "stop" if permitted
                                else "continue", FINAL_REVIEWER),
            signal=signal,
        )


@attr.s
class ScriptedInterpreter(RolePolicy):
    """Grounds the task: visual summary and the temporal constraint surface."""

    ROLE = INTERPRETER

    async def act(self, dispatch, workspace, memory):
        """Render the summary figures and restate the constraint surface."""
        if dispatch.explicit_focus != Focus.grounding:
            return self.idle(dispatch)
        loop = asyncio.get_running_loop()
        with tempfile.TemporaryDirectory() as tmp:
            artifact = await loop.run_in_executor(None, visual_summary, workspace.history, Path(tmp))
            paths = list(artifact.figures) + [artifact.summary_path, artifact.extracts_path]
            writes = [ArtifactWrite(ActionKind.figures, path.name, path.read_bytes()) for path in paths]
        surface = workspace.surface
        proposal = MemorySyncProposal(
            kind=ProposalKind.decision_candidate,
            content=f"treat {surface.leakage_boundary} as the leakage boundary",
            confidence=1.0,
            reason="stated by the task file constraints",
            proposer=self.role,
            scope_and_limits="this task",
        )
        work = (
            f"{artifact.entity_count} series over {artifact.date_span[0]}..{artifact.date_span[1]}, "
            f"{len(artifact.missing_spans)} missing spans; " + surface.to_text().replace("\n", "; ").strip("; ")
        )
        return RoleResult(
            reportback=finished(
                work,
                "propose strategy lines",
                CONSTRUCTOR,
                new_risks=[f"unresolved constraint {name}" for name in surface.unresolved],
                suggested_memory_updates=[proposal],
                cited_artifacts=[w.path for w in writes],
                self_critique="summary covers public history only",
            ),
            writes=writes,
            tools=("visual_summary", "resolve_temporal_constraints"),
        )


@attr.s
class ScriptedEvidenceCollector(RolePolicy):
    """Returns a fixed list of local evidence; nothing is fetched."""

    ROLE = EVIDENCE_COLLECTOR

    LOCAL_EVIDENCE = (
        "workspace manifest lists every exposed file",
        "auxiliary files end at their declared availability",
        "no external source consulted",
    )

    async def act(self, dispatch, workspace, memory):
        """Report the local evidence list."""
        if dispatch.explicit_focus != Focus.evidence:
            return self.idle(dispatch)
        files = ", ".join(sorted(workspace.files))
        proposal = MemorySyncProposal(
            kind=ProposalKind.relation_candidate,
            content="evidence_collector -> constructor: local evidence",
            confidence=0.9,
            reason="constructor consumes the evidence list",
            proposer=self.role,
        )
        return RoleResult(
            reportback=finished(
                "; ".join(self.LOCAL_EVIDENCE + (f"files: {files}",)),
                "propose strategy lines",
                CONSTRUCTOR,
                suggested_memory_updates=[proposal],
            ),
            tools=("list_files",),
        )


@attr.s
class ScriptedConstructor(RolePolicy):
    """Builds candidate forecasts, backtests them and answers review issues.

    On a re-entry with blocking context the fallback line is added when it
    is not already proposed.
    """

    ROLE = CONSTRUCTOR

    candidates = attr.ib(type=Tuple[CandidateSpec, ...], factory=default_candidates, converter=tuple)
    fallback = attr.ib(type=CandidateSpec, default=CANDIDATE_SPECS["median"])

    async def act(self, dispatch, workspace, memory):
        """Expand strategy lines or respond to open issues."""
        if dispatch.explicit_focus == Focus.expansion:
            return await self._expand(dispatch, workspace)
        if dispatch.explicit_focus == Focus.rebuttal:
            return self._rebut(dispatch, workspace)
        return self.idle(dispatch)

    def _specs(self, dispatch: DispatchPacket) -> List[CandidateSpec]:
        specs = list(self.candidates)
        if dispatch.blocking_context and all(spec.name != self.fallback.name for spec in specs):
            self.logger.info(f"adding fallback line {self.fallback.name}")
            specs.append(self.fallback)
        return specs

    async def _expand(self, dispatch: DispatchPacket, workspace: WorkspaceView) -> RoleResult:
        specs = self._specs(dispatch)
        config, history, scope = workspace.config, workspace.history, workspace.task.scope
        loop = asyncio.get_running_loop()
        forecasts = await asyncio.gather(*[
            loop.run_in_executor(None, spec.forecast, history, scope, config) for spec in specs
        ])
        backtests = await run_backtests({spec.name: spec.forecaster(config) for spec in specs}, history, scope)

        writes, candidates = [], []
        for spec, (predictions, report) in zip(specs, forecasts):
            payload = to_submission(predictions, workspace.skeleton, workspace.task.output)
            write = ArtifactWrite(ActionKind.submissions, f"{spec.name}.csv", payload)
            writes.append(write)
            candidates.append(Candidate(
                name=spec.name,
                description=spec.description,
                submission=write.path,
                payload_digest=digest(payload),
                has_fallback=spec.has_fallback,
                baseline=spec.baseline,
                leakage=report,
                backtest=backtests[spec.name],
            ))

        scored = {c.name: c.local_score for c in candidates if c.local_score is not None}
        if scored:
            figure = bar_figure(scored, "Local backtest RMSLE", "rmsle")
            writes.append(ArtifactWrite(ActionKind.figures, BACKTEST_FIGURE, png_bytes(figure)))
            best = min(scored, key=lambda name: (scored[name], name))
            predictions = dict(zip([s.name for s in specs], forecasts))[best][0]
            writes.append(ArtifactWrite(ActionKind.figures, OVERLAY_FIGURE, self._overlay(history, predictions, best)))

        return RoleResult(
            reportback=finished(
                "; ".join(self._describe(c) for c in candidates),
                "review strategy lines",
                TEMPORAL_GOVERNOR,
                new_risks=[c.leakage.summary() for c in candidates
                           if c.leakage is not None and c.leakage.verdict != LeakageVerdict.fully_valid],
                suggested_memory_updates=self._proposals(candidates),
                cited_artifacts=[w.path for w in writes],
                self_critique="backtest window is a single horizon",
            ),
            writes=writes,
            candidates=candidates,
            tools=("forecast", "backtest", "check_boundary", "render_figure"),
        )

    @staticmethod
    def _describe(candidate: Candidate) -> str:
        score = f"{candidate.local_score:.4f}" if candidate.local_score is not None else "unscored"
        return f"{candidate.name}: local rmsle {score}, {candidate.verdict}"

    @staticmethod
    def _overlay(history, predictions, label: str) -> bytes:
        observed = history.frame.groupby(DATE, sort=True)[TARGET].sum().tail(OVERLAY_HISTORY_DAYS)
        forecast = predictions.frame.groupby(DATE, sort=True)[TARGET].sum()
        figure = line_figure(
            {"history": (observed.index, observed.to_numpy()), label: (forecast.index, forecast.to_numpy())},
            f"Aggregate history and {label} forecast",
            "target",
        )
        return png_bytes(figure)

    def _proposals(self, candidates) -> List[MemorySyncProposal]:
        proposals = []
        for candidate in candidates:
            if candidate.verdict == LeakageVerdict.invalid:
                proposals.append(MemorySyncProposal(
                    kind=ProposalKind.negative_candidate,
                    content="a lag reaching past the cutoff leaves hidden dates without a legal value",
                    confidence=0.8,
                    reason=f"{candidate.name} has no fallback",
                    proposer=self.role,
                    scope_and_limits=f"lag {candidate.leakage.lag_steps} against a longer horizon",
                    evidence=candidate.leakage.summary(),
                ))
            elif candidate.baseline and candidate.local_score is not None:
                proposals.append(MemorySyncProposal(
                    kind=ProposalKind.positive_candidate,
                    content="a recent-window median is a stable reference line",
                    confidence=0.6,
                    reason="scored locally without leakage",
                    proposer=self.role,
                    scope_and_limits="daily series with weekly seasonality",
                    evidence=f"local rmsle {candidate.local_score:.4f}",
                ))
        return proposals

    def _rebut(self, dispatch: DispatchPacket, workspace: WorkspaceView) -> RoleResult:
        responses = []
        for issue_id in dispatch.blocking_context:
            if workspace.ledger is None or workspace.ledger.thread(issue_id) is None:
                continue
            evidence, plan = self._answer(issue_id, workspace)
            responses.append((issue_id, IssueResponse(
                acceptance_status=AcceptanceStatus.accepted,
                current_evidence=evidence,
                fix_plan=plan,
            )))
        return RoleResult(
            reportback=finished(
                f"answered {len(responses)} issues",
                "recheck answered issues",
                TEMPORAL_GOVERNOR,
                cited_artifacts=sorted(workspace.artifacts),
            ),
            responses=responses,
            tools=("rebuttal",),
        )

    @staticmethod
    def _answer(issue_id: str, workspace: WorkspaceView) -> Tuple[str, str]:
        active = workspace.active_candidates()
        if issue_id == LEAKAGE_ISSUE:
            reports = [f"{c.name}: {c.leakage.summary()}" + (", fallback covers the rest" if c.has_fallback else "")
                       for c in active if c.leakage is not None]
            return "; ".join(reports) or "no lagged line is active", "drop lag lines without a fallback"
        if issue_id == CITATION_ISSUE:
            return f"cited {len(workspace.artifacts)} artifacts", "cite every figure in the reportback"
        if issue_id == BASELINE_ISSUE:
            scored = [f"{c.name} {c.local_score:.4f}" for c in active if c.local_score is not None]
            evidence = "local rmsle " + ", ".join(scored) if scored else "no line scored yet"
            return evidence, "compare every line against the median baseline"
        return "acknowledged", "address the issue in the next round"


@attr.s
class ScriptedTemporalGovernor(RolePolicy):
    """Reviews strategy lines for leakage, uncited figures and a missing baseline.

    With ``fixture_issues`` set the first review raises all three issues
    whether or not a check finds a problem.
    """

    ROLE = TEMPORAL_GOVERNOR

    fixture_issues = attr.ib(type=bool, default=True)

    async def act(self, dispatch, workspace, memory):
        """Review candidates, recheck answered issues or signal completion."""
        if dispatch.explicit_focus == Focus.review:
            return self._review(workspace)
        if dispatch.explicit_focus == Focus.recheck:
            return self._recheck(dispatch, workspace)
        if dispatch.explicit_focus == Focus.completion:
            return RoleResult(reportback=finished("temporal state checked", "stop", FINAL_REVIEWER),
                              signal=self._signal(workspace))
        return self.idle(dispatch)

    @staticmethod
    def _uncited_figures(workspace: WorkspaceView) -> List[str]:
        figures = {a for a in workspace.artifacts if a.startswith(f"{FIGURES_DIR}/") and a.endswith(".png")}
        return sorted(figures - workspace.cited_artifacts)

    def _problems(self, workspace: WorkspaceView) -> Dict[str, Optional[str]]:
        """Map each check to its finding, None when the check passes."""
        active = workspace.active_candidates()
        leaky = [c for c in active if c.verdict == LeakageVerdict.invalid]
        uncited = self._uncited_figures(workspace)
        baseline = any(c.baseline and c.local_score is not None for c in active)
        return {
            LEAKAGE_ISSUE: "; ".join(c.leakage.summary() for c in leaky) if leaky else None,
            CITATION_ISSUE: f"figures never cited: {', '.join(uncited)}" if uncited else None,
            BASELINE_ISSUE: None if baseline else "no line is compared against a scored baseline",
        }

    FIXTURE_TEXT = {
        LEAKAGE_ISSUE: "show that no prediction reads a target after the cutoff",
        CITATION_ISSUE: "every figure must back a claim in a reportback",
        BASELINE_ISSUE: "report the leading line against the median baseline",
    }

    def _review(self, workspace: WorkspaceView) -> RoleResult:
        first = workspace.ledger is None or not workspace.ledger.threads
        issues = []
        for issue_id, finding in self._problems(workspace).items():
            if workspace.ledger is not None and workspace.ledger.thread(issue_id) is not None:
                continue
            if finding is None and not (self.fixture_issues and first):
                continue
            issues.append(ReviewIssue(issue_id, finding or self.FIXTURE_TEXT[issue_id], self.role))
        open_ids = [i.issue_id for i in issues] + list(workspace.ledger.open_issue_ids if workspace.ledger else ())
        reportback = finished(
            f"raised {len(issues)} issues" if issues else "no new issues",
            "answer the issues" if open_ids else "proceed to completion",
            CONSTRUCTOR if open_ids else FINAL_REVIEWER,
            open_blockers=open_ids,
        )
        signal = self._signal(workspace, open_ids)
        return RoleResult(reportback=reportback, signal=signal, issues=issues, tools=("check_boundary", "review"))

    def _recheck(self, dispatch: DispatchPacket, workspace: WorkspaceView) -> RoleResult:
        problems = self._problems(workspace)
        verdicts = []
        for issue_id in dispatch.blocking_context:
            finding = problems.get(issue_id)
            resolved = finding is None
            verdicts.append((issue_id, RecheckVerdict(
                resolved=resolved,
                reason="check passes on recheck" if resolved else finding,
                issued_by=self.role,
                remaining_gap="" if resolved else finding,
                required_next_change="" if resolved else "revise the strategy lines",
                completion_signal=SignalKind.continue_ if resolved else SignalKind.rebuttal_required,
            )))
        still_open = [issue_id for issue_id, v in verdicts if not v.resolved]
        return RoleResult(
            reportback=finished(
                f"rechecked {len(verdicts)} issues, {len(still_open)} still open",
                "proceed to completion" if not still_open else "revise and answer again",
                FINAL_REVIEWER if not still_open else CONSTRUCTOR,
                open_blockers=still_open,
            ),
            verdicts=verdicts,
            signal=self._signal(workspace, still_open),
            tools=("recheck",),
        )

    def _signal(self, workspace: WorkspaceView, open_ids=None) -> CompletionSignal:
        if open_ids is None:
            open_ids = list(workspace.ledger.open_issue_ids) if workspace.ledger is not None else []
        problems = {k: v for k, v in self._problems(workspace).items() if v is not None}
        checks = {issue_id: issue_id not in problems for issue_id in (LEAKAGE_ISSUE, CITATION_ISSUE, BASELINE_ISSUE)}
        if open_ids:
            return CompletionSignal(
                kind=SignalKind.rebuttal_required,
                reasons=f"open issues: {', '.join(open_ids)}",
                scope="temporal validity",
                issued_by=self.role,
                next_action="answer every open issue",
                completion_checks=checks,
                remaining_action_count=len(open_ids),
            )
        if problems:
            return CompletionSignal(
                kind=SignalKind.continue_,
                reasons="; ".join(problems.values()),
                scope="temporal validity",
                issued_by=self.role,
                next_action="revise the strategy lines",
                completion_checks=checks,
                remaining_action_count=len(problems),
            )
        return CompletionSignal(
            kind=SignalKind.allow_stop,
            reasons="no temporal objection",
            scope="temporal validity",
            issued_by=self.role,
            completion_checks=checks,
            remaining_action_count=0,
            complete_state=True,
        )


@attr.s
class ScriptedFinalReviewer(RolePolicy):
    """Allows a stop only when the completion and release gates both pass."""

    ROLE = FINAL_REVIEWER

    thresholds = attr.ib(type=ReleaseThresholds, factory=ReleaseThresholds)

    async def act(self, dispatch, workspace, memory):
        """Judge the run from the compacted context."""
        if dispatch.explicit_focus != Focus.completion:
            return self.idle(dispatch)
        final, baseline = workspace.final_submission, workspace.baseline_submission
        leader = workspace.candidate(workspace.leader.branch_id) if workspace.leader is not None else None
        release = evaluate_release_gate(
            self.thresholds,
            final_admissible=bool(final and final.get("admissible")),
            final_score=final.get("primary_score") if final else None,
            baseline_score=baseline.get("primary_score") if baseline else None,
            local_score=leader.local_score if leader is not None else None,
            rollback_triggers=workspace.rollback_triggers,
        )
        gate = memory.get("gate")
        if gate is None:
            permitted, reason = False, "no completion gate record"
        else:
            checks = dict(gate.pre_stop_checks or {})
            checks["final_reviewer"] = CheckStatus.passed
            permitted, reason = evaluate_completion_gate(attr.evolve(gate, pre_stop_checks=checks))
        checks = {"completion_gate": permitted, "release_gate": release.releasable}
        blocked = workspace.ledger is not None and workspace.ledger.blocked
        if permitted and release.releasable and not blocked:
            signal = CompletionSignal(
                kind=SignalKind.allow_stop,
                reasons=f"{reason}; release {release.decision}",
                scope="run",
                issued_by=self.role,
                completion_checks=checks,
                remaining_action_count=0,
                complete_state=True,
            )
        else:
            why = reason if not permitted else "; ".join(release.reasons)
            signal = CompletionSignal(
                kind=SignalKind.rebuttal_required if blocked else SignalKind.continue_,
                reasons=why,
                scope="run",
                issued_by=self.role,
                next_action=why,
                completion_checks=checks,
                remaining_action_count=1,
            )
        return RoleResult(
            reportback=finished(
                f"release {release.decision}: {'; '.join(release.reasons)}",
                "stop" if signal.kind == SignalKind.allow_stop else "continue",
                ORCHESTRATOR,
                cited_artifacts=[final["artifact"]] if final and final.get("artifact") else [],
            ),
            signal=signal,
            release=release,
            tools=("release_gate", "completion_gate"),
        )


def scripted_roles(fixture_issues: bool = True, **constructor) -> Dict[str, RolePolicy]:
    """Return one scripted policy per role, keyed by role name.

    ``constructor`` keywords go to :class:`ScriptedConstructor`.
    """
    policies = [
        ScriptedOrchestrator(),
        ScriptedInterpreter(),
        ScriptedEvidenceCollector(),
        ScriptedConstructor(**constructor),
        ScriptedTemporalGovernor(fixture_issues=fixture_issues),
        ScriptedFinalReviewer(),
    ]
    return {str(policy.role): policy for policy in policies}
