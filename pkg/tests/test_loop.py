import pandas as pd
import pytest

from .context import (
    DATE,
    FAMILY,
    STORE,
    TARGET,
    HarnessConfig,
    UnifiedSeriesTable,
    ingest_table,
    load_reconstruction,
)
from forecast_harness.data.reconstruction import TRAIN_FILE
from forecast_harness.errors import BudgetExceeded, MissingRole
from forecast_harness.memory.store import MemoryStore
from forecast_harness.orchestration.loop import check_roles, run_governed_loop
from forecast_harness.orchestration.roles import CANDIDATE_SPECS, scripted_roles
from forecast_harness.orchestration.report import statistics_from_events
from forecast_harness.orchestration.workspace import REPORT_FILE, CandidateSpec
from forecast_harness.protocol.events import read_events, replay_file
from forecast_harness.protocol.records import SignalKind
from forecast_harness.server.app import TaskServer
from forecast_harness.server.state import TaskServerState

COLUMNS = [DATE, STORE, FAMILY, TARGET]


async def _run(reconstruction_dir, run_dir, roles=None, **config):
    state = TaskServerState.from_bundle(load_reconstruction(reconstruction_dir))
    async with TaskServer(state) as server:
        outcome = await run_governed_loop(state.task, server.endpoint, roles or scripted_roles(),
                                          HarnessConfig(**config), run_dir, command="pytest")
    return outcome, state


@pytest.mark.asyncio
async def test_default_run_stops_with_an_admissible_submission(reconstruction_dir, tmp_path):
    run_dir = tmp_path / "run"
    outcome, state = await _run(reconstruction_dir, run_dir)

    assert outcome.final_signal.kind == SignalKind.allow_stop
    assert outcome.final_submission["admissible"]
    assert outcome.release.releasable
    assert outcome.leader in ("median", "ses", "weekday_lag_fallback")
    assert state.submissions and all(r.submitter_label.startswith("harness/") for r in state.submissions)

    replayed = replay_file(outcome.event_log)
    assert replayed.stopped and replayed.stop_permission
    assert replayed.review_blocks == 3
    assert replayed.open_issues == frozenset()
    assert replayed.weakening_violations == ()
    assert replayed.lifecycle_violations == ()
    assert "grounded" in replayed.checkpoints

    assert outcome.statistics == statistics_from_events(read_events(outcome.event_log))
    assert outcome.statistics.review_blocks == 3
    assert outcome.statistics.figures_produced >= 3

    store = MemoryStore(outcome.memory_dir)
    gate = store.read("gate")
    assert gate.stop_permission
    assert store.read("anchor").goals[0].startswith("submit an admissible forecast")
    assert store.read("trace").rounds
    assert set(store.replay_journal()) >= {"anchor", "progress", "decisions", "gate", "snapshot"}

    for issue in ("temporal-leakage", "uncited-figure", "missing-baseline"):
        assert "status: closed" in (run_dir / "rebuttals" / f"{issue}.txt").read_text()
    report = (run_dir / REPORT_FILE).read_text()
    assert "outcome = allow_stop" in report
    assert "rerun = pytest" in report


@pytest.mark.asyncio
async def test_lag_without_fallback_rolls_back_to_the_median(reconstruction_dir, tmp_path):
    roles = scripted_roles(candidates=[CANDIDATE_SPECS["weekday_lag"]])
    outcome, _ = await _run(reconstruction_dir, tmp_path / "run", roles)

    assert outcome.final_signal.kind == SignalKind.allow_stop
    assert outcome.leader == "median"
    assert outcome.rounds >= 2
    replayed = replay_file(outcome.event_log)
    assert "rollback-wave-1" in replayed.checkpoints
    decisions = MemoryStore(outcome.memory_dir).read("decisions")
    alignment = {entry.branch_id: entry.status for entry in decisions.alignment}
    assert alignment == {"weekday_lag": "abandoned", "median": "merged"}


@pytest.mark.asyncio
async def test_oracle_line_scores_zero(reconstruction_dir, tmp_path):
    bundle = load_reconstruction(reconstruction_dir)
    history = ingest_table(bundle.public_files[TRAIN_FILE]).frame[COLUMNS]
    full = UnifiedSeriesTable.from_frame(pd.concat([history, bundle.hidden_truth.frame[COLUMNS]]))
    oracle = CandidateSpec(
        "oracle",
        "reads the sealed truth",
        lambda config: lambda table, scope: (full.window(scope.horizon_start, scope.horizon_end), None),
    )
    roles = scripted_roles(candidates=[oracle, CANDIDATE_SPECS["median"]])
    outcome, _ = await _run(reconstruction_dir, tmp_path / "run", roles)

    assert outcome.leader == "oracle"
    assert outcome.final_submission["primary_score"] == pytest.approx(0.0, abs=1e-9)
    assert outcome.release.releasable


def test_missing_role():
    roles = scripted_roles()
    del roles["final_reviewer"]
    with pytest.raises(MissingRole) as excinfo:
        check_roles(roles)
    assert excinfo.value.name == "final_reviewer"


@pytest.mark.asyncio
async def test_round_budget_exhausted(reconstruction_dir, tmp_path):
    run_dir = tmp_path / "run"
    roles = scripted_roles(candidates=[CANDIDATE_SPECS["weekday_lag"]])
    with pytest.raises(BudgetExceeded):
        await _run(reconstruction_dir, run_dir, roles, max_rounds=1)
    assert "outcome = stopped: no allow_stop within 1 rounds" in (run_dir / REPORT_FILE).read_text()
    assert not replay_file(run_dir / "events.log").stopped
