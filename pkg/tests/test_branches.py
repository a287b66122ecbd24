import pytest

from forecast_harness.data.leakage import LeakageVerdict
from forecast_harness.errors import BranchBlocked
from forecast_harness.orchestration.branches import BranchStatus, BranchTable, StrategyBranch
from forecast_harness.orchestration.rollback import (
    CandidateChecks,
    RollbackKind,
    RollbackTrigger,
    RunView,
    detect_rollback,
)


def _branch(branch_id, verdict=LeakageVerdict.fully_valid, **kwargs):
    return StrategyBranch(branch_id, 1, f"{branch_id} strategy", "backtest rmsle", leakage_verdict=verdict, **kwargs)


def test_promote_moves_the_lead():
    table = BranchTable()
    table.open(_branch("median"))
    table.open(_branch("ses"))
    table.promote("median")
    table.promote("ses")
    assert table.leading.branch_id == "ses"
    assert table.get("median").status == BranchStatus.open
    assert [b.branch_id for b in table.active(wave=1)] == ["median", "ses"]
    assert table.active(wave=2) == ()


def test_invalid_branch_never_leads():
    table = BranchTable()
    table.open(_branch("lagged", LeakageVerdict.invalid))
    with pytest.raises(BranchBlocked):
        table.promote("lagged")
    with pytest.raises(BranchBlocked):
        _branch("lagged", LeakageVerdict.invalid, status=BranchStatus.leading)
    assert table.leading is None
    assert table.to_alignment()[0].status == "blocked"
    assert table.to_alignment()[0].action_item


def test_revision_adds_evidence_or_counts_as_stale():
    table = BranchTable()
    table.open(_branch("median"))
    table.revise("median", ["figures/median.png"])
    table.revise("median", [])
    table.open(_branch("median"))
    assert table.get("median").revisions_without_evidence == 2
    table.revise("median", ["backtest.txt"])
    assert table.get("median").revisions_without_evidence == 0


def test_reopen_with_a_fallback_updates_the_verdict():
    table = BranchTable()
    table.open(_branch("lagged", LeakageVerdict.invalid))
    table.open(_branch("lagged", LeakageVerdict.fully_valid))
    assert table.promote("lagged").status == BranchStatus.leading


def test_abandon_and_merge():
    table = BranchTable()
    table.open(_branch("mean"))
    table.open(_branch("median"))
    table.abandon("mean", "worse than median")
    assert table.merge_leader() is None
    table.promote("median")
    assert table.merge_leader().status == BranchStatus.merged
    assert {entry.branch_id: entry.status for entry in table.to_alignment()} == {
        "mean": "abandoned",
        "median": "merged",
    }
    assert table.active() == ()


def test_negative_wave_rejected():
    with pytest.raises(ValueError):
        StrategyBranch("x", -1, "x", "x")


def test_quiet_run_triggers_nothing():
    view = RunView(
        branches=[_branch("median", revisions=[("a.png",)])],
        artifacts=["a.png"],
        cited_artifacts=["a.png"],
        candidates={"median": CandidateChecks(local_check=True, baseline_comparison=True)},
    )
    assert detect_rollback(view) == frozenset()


def test_each_trigger_fires():
    view = RunView(
        branches=[_branch("weekday", revisions=[("a.png",), (), (), ()])],
        artifacts=["a.png", "b.png"],
        cited_artifacts=["a.png"],
        candidates={"weekday": CandidateChecks(local_check=True)},
        unresolved_constraints=["oil.csv availability"],
        stop_attempted=True,
        open_blockers=["leak-1"],
    )
    fired = {trigger.kind: trigger.evidence for trigger in detect_rollback(view)}
    assert set(fired) == set(RollbackKind)
    assert fired[RollbackKind.one_strategy_fixation] == "weekday revised 3 times without new evidence"
    assert fired[RollbackKind.unconsumed_artifacts] == "never cited: b.png"
    assert fired[RollbackKind.weak_validation] == "weekday lacks baseline comparison"
    assert "leak-1" in fired[RollbackKind.premature_completion]


def test_fixation_threshold_is_configurable():
    branch = _branch("weekday", revisions=[(), ()])
    assert detect_rollback(RunView(branches=[branch])) == frozenset()
    fired = detect_rollback(RunView(branches=[branch], fixation_threshold=2))
    assert {t.kind for t in fired} == {RollbackKind.one_strategy_fixation}


def test_stop_without_blockers_is_not_premature():
    assert detect_rollback(RunView(stop_attempted=True)) == frozenset()


def test_trigger_needs_evidence():
    with pytest.raises(ValueError):
        RollbackTrigger(RollbackKind.weak_validation, " ")
