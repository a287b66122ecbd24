import datetime

from .context import HarnessConfig
from forecast_harness.orchestration.report import (
    ArtifactPackage,
    TraceCollector,
    TraceStatistics,
    environment_note,
    render_report,
    statistics_from_events,
    write_report,
)
from forecast_harness.protocol.events import EVENT_LOG_FILE, EventLog, RuntimeEvent
from forecast_harness.protocol.records import EventType
from forecast_harness.protocol.roles import CONSTRUCTOR, ORCHESTRATOR, TEMPORAL_GOVERNOR

T0 = datetime.datetime(2017, 8, 16, 12, 0, tzinfo=datetime.timezone.utc)


def _at(seconds):
    return T0 + datetime.timedelta(seconds=seconds)


def _events():
    return [
        RuntimeEvent.create(EventType.dispatch_creation, ORCHESTRATOR, "t", {"dispatch": "d1", "round": 0},
                            timestamp=_at(0)),
        RuntimeEvent.create(EventType.reportback_receipt, CONSTRUCTOR, "t", {"tools": ("forecast", "backtest")},
                            ["figures/backtest_scores.png", "submissions/median.csv"], timestamp=_at(5)),
        RuntimeEvent.create(EventType.dispatch_creation, ORCHESTRATOR, "t", {"dispatch": "d2", "round": 1},
                            timestamp=_at(6)),
        RuntimeEvent.create(EventType.rebuttal_opening, TEMPORAL_GOVERNOR, "t", {"issues": "a"}, timestamp=_at(7)),
        RuntimeEvent.create(EventType.rebuttal_opening, TEMPORAL_GOVERNOR, "t", {"issues": "b"}, timestamp=_at(7)),
        RuntimeEvent.create(EventType.rebuttal_review, TEMPORAL_GOVERNOR, "t", {"issue": "a"},
                            ["rebuttals/a.txt"], timestamp=_at(9)),
        RuntimeEvent.create(EventType.reportback_receipt, TEMPORAL_GOVERNOR, "t", {"tools": ("review", "backtest")},
                            ["figures/backtest_scores.png"], timestamp=_at(12.5)),
    ]


def test_statistics_from_events():
    stats = statistics_from_events(_events())
    assert stats == TraceStatistics(
        runtime=12.5,
        unique_tools=3,
        touched_files=3,
        review_blocks=2,
        critique_rounds=1,
        figures_produced=1,
        rounds=1,
    )
    assert statistics_from_events([]).runtime == 0.0


def test_statistics_table():
    table = TraceStatistics(61.25, 4, 10, 3, 3, 5, 2).to_table()
    lines = table.splitlines()
    assert lines[0] == "Runtime (s)       61.2"
    assert lines[3].split() == ["Review", "blocks", "3"]
    assert len(lines) == 7


def test_collector_follows_the_log(tmp_path):
    log = EventLog(tmp_path / EVENT_LOG_FILE)
    collector = TraceCollector(log)
    for event in _events():
        log.append(event)
    assert collector.events == _events()
    assert collector.statistics.review_blocks == 2


def test_environment_note():
    note = environment_note()
    assert note.startswith("python ")
    assert "MiB memory" in note


def _package(task, **kwargs):
    submissions = {
        "submissions/ses.csv": {"id": 1, "admissible": True, "primary_score": 0.41},
        "submissions/median.csv": {"id": 2, "admissible": True, "primary_score": 0.52},
    }
    return ArtifactPackage(
        task=task,
        config=HarnessConfig(),
        command="forecast-harness run task.txt",
        outcome="allow_stop by final_reviewer",
        statistics=statistics_from_events(_events()),
        submissions=submissions,
        final_artifact="submissions/ses.csv",
        baseline_artifact="submissions/median.csv",
        leaderboard=[{"submitter": "harness/ses", "score": 0.41, "submission_id": 1}],
        local_scores={"ses": 0.39, "weekday_lag": None},
        figure_claims={"figures/backtest_scores.png": "local rmsle per strategy line"},
        finished_at=T0,
        **kwargs,
    )


def test_package_sections(task):
    text = _package(task).to_text()
    titles = [line for line in text.splitlines() if line.startswith("[")]
    assert titles == ["[configuration]", "[execution]", "[scored outputs]", "[diagnosis artifacts]",
                      "[report binding]", "[trace statistics]"]
    assert f"history = {task.scope.history_start}..{task.scope.history_end}" in text
    assert "rerun = forecast-harness run task.txt" in text
    assert "final = submissions/ses.csv (#1 admissible, score 0.410000)" in text
    assert "local weekday_lag = unscored" in text
    assert "leaderboard 1: harness/ses 0.410000 (#1)" in text
    assert "figures/backtest_scores.png -> local rmsle per strategy line" in text


def test_package_without_submissions(task):
    package = ArtifactPackage(task=task, config=HarnessConfig(), command="run", outcome="stopped",
                              statistics=TraceStatistics(0.0, 0, 0, 0, 0, 0))
    text = package.to_text()
    assert "final = - (not submitted)" in text
    assert "[diagnosis artifacts]\n  none\n" in text


def test_write_and_render(tmp_path, task):
    path = write_report(tmp_path, _package(task))
    assert path.read_text().startswith("[configuration]")
    log = EventLog(tmp_path / EVENT_LOG_FILE)
    for event in _events():
        log.append(event)
    (tmp_path / "figures").mkdir()
    (tmp_path / "figures" / "backtest_scores.png").write_bytes(b"png")
    rendered = render_report(tmp_path)
    assert rendered.startswith("Runtime (s)")
    assert rendered.endswith("figures:\n  figures/backtest_scores.png\n")
