import datetime

import pytest

from forecast_harness.data.leakage import LeakageReport, LeakageVerdict
from forecast_harness.errors import ScopeViolation
from forecast_harness.memory.records import ProgressLedger
from forecast_harness.orchestration.workspace import (
    REPORT_FILE,
    ArtifactWrite,
    Candidate,
    MemoryView,
    commit_writes,
)
from forecast_harness.protocol.records import ActionKind, DispatchPacket


def _dispatch(*actions):
    return DispatchPacket(
        objective="propose strategy lines",
        known_inputs=["train.csv"],
        context_mode="full",
        explicit_focus="expansion",
        required_reads=[],
        permitted_action_scope=actions,
        constraints=[],
        autonomy_settings="execute_only",
        output_requirements="reportback",
        blocking_context=[],
    )


def test_write_paths():
    assert ArtifactWrite("figures", "a.png", b"").path == "figures/a.png"
    assert ArtifactWrite(ActionKind.submissions, "median.csv", b"").path == "submissions/median.csv"
    assert ArtifactWrite("report", "anything", b"").path == REPORT_FILE
    with pytest.raises(ScopeViolation):
        ArtifactWrite("submit", "x", b"").path


def test_commit_writes(tmp_path):
    writes = [ArtifactWrite("figures", "a.png", b"png"), ArtifactWrite("submissions", "m.csv", b"id,sales\n")]
    written = commit_writes(_dispatch("figures", "submissions"), writes, tmp_path)
    assert written == ["figures/a.png", "submissions/m.csv"]
    assert (tmp_path / "figures" / "a.png").read_bytes() == b"png"
    assert not list(tmp_path.rglob("*.tmp"))


def test_commit_refuses_out_of_scope_before_writing(tmp_path):
    writes = [ArtifactWrite("figures", "a.png", b"png"), ArtifactWrite("memory", "progress.txt", b"")]
    with pytest.raises(ScopeViolation):
        commit_writes(_dispatch("figures"), writes, tmp_path)
    assert not (tmp_path / "figures").exists()


@pytest.mark.parametrize("name", ["../escape.png", "/etc/passwd", "a/../../b.png", ""])
def test_commit_refuses_escaping_names(tmp_path, name):
    with pytest.raises(ScopeViolation):
        commit_writes(_dispatch("figures"), [ArtifactWrite("figures", name, b"")], tmp_path)


def test_submit_is_not_a_write_area(tmp_path):
    with pytest.raises(ScopeViolation):
        commit_writes(_dispatch("submit"), [ArtifactWrite("submit", "x.csv", b"")], tmp_path)


def test_candidate_verdict():
    partial = LeakageReport("weekday", 7, [datetime.date(2017, 7, 31)], [datetime.date(2017, 8, 10)])
    plain = Candidate("median", "median", "submissions/median.csv", "00")
    assert plain.verdict == LeakageVerdict.fully_valid
    assert plain.local_score is None

    lagged = Candidate("lag", "lag", "submissions/lag.csv", "00", leakage=partial)
    assert lagged.verdict == LeakageVerdict.invalid
    covered = Candidate("lag", "lag", "submissions/lag.csv", "00", has_fallback=True, leakage=partial)
    assert covered.verdict == LeakageVerdict.fully_valid


def test_memory_view_digests():
    progress = ProgressLedger(current_focus="baseline")
    view = MemoryView({"progress": progress})
    assert view.get("progress") is progress
    assert view.get("gate") is None
    assert view.digests == {"progress": progress.digest}
