import asyncio
import datetime
import io
import json
from unittest.mock import AsyncMock

import aiohttp
import attr
import pandas as pd
import pytest
from aiohttp import web
from aiohttp.test_utils import TestClient, TestServer

from .conftest import CUTOFF
from .context import load_reconstruction
from forecast_harness.errors import (
    CorruptState,
    MissingRawFile,
    PortUnavailable,
    ServerUnreachable,
    SubmissionLimitReached,
    UnreadablePayload,
)
from forecast_harness.network import BindAddress, find_free_port, port_available
from forecast_harness.server.app import SUBMITTER_HEADER, TaskServer, create_app, serve
from forecast_harness.server.client import TaskServerClient
from forecast_harness.server.state import (
    SUBMISSION_LOG_FILE,
    SubmissionLog,
    SubmissionRecord,
    TaskServerState,
    leaderboard,
    utcnow,
)
from forecast_harness.task.model import ValidationOutcome
from forecast_harness.validation.report import CheckResult, MetricScores, ValidityReport


def _state(out_dir, log=True, max_submissions=None) -> TaskServerState:
    state = TaskServerState.from_bundle(
        load_reconstruction(out_dir),
        log_path=out_dir / SUBMISSION_LOG_FILE if log else None,
    )
    if max_submissions is not None:
        constraints = attr.evolve(state.task.constraints, max_submissions=max_submissions)
        state.task = attr.evolve(state.task, constraints=constraints)
    return state


def _short(payload: bytes) -> bytes:
    frame = pd.read_csv(io.BytesIO(payload))
    return frame.iloc[:-1].to_csv(index=False).encode("utf-8")


def _record(record_id, label, score=None):
    if score is None:
        outcome = ValidationOutcome(validity=ValidityReport([CheckResult("row_count", False, "expected 2, got 1")]))
    else:
        outcome = ValidationOutcome(
            validity=ValidityReport([CheckResult("row_count", True)]),
            scores=MetricScores(values={"rmsle": score}, primary="rmsle", n=1),
        )
    return SubmissionRecord(id=record_id, received_at=utcnow(), outcome=outcome, payload_digest="00",
                            submitter_label=label)


def test_leaderboard_best_per_submitter():
    records = [_record(1, "A", 0.9), _record(2, "B", 0.7), _record(3, "A", 0.5), _record(4, "C")]
    rows = leaderboard(records)
    assert [(row.submitter_label, row.best_score) for row in rows] == [("A", 0.5), ("B", 0.7)]
    assert leaderboard([]) == []


def test_leaderboard_tie_prefers_earlier_id():
    rows = leaderboard([_record(3, "late", 0.5), _record(7, "later", 0.5)][::-1])
    assert [row.submission_id for row in rows] == [3, 7]


@pytest.mark.asyncio
async def test_file_listing_and_download(reconstruction_dir):
    state = _state(reconstruction_dir)
    async with TestClient(TestServer(create_app(state))) as client:
        response = await client.get("/api/files")
        assert response.status == 200
        names = {entry["name"] for entry in await response.json()}
        assert {"train.csv", "test.csv", "oil.csv", "holidays_events.csv", "transactions.csv"} <= names

        response = await client.get("/api/files/train.csv")
        assert await response.read() == state.public_files["train.csv"]

        response = await client.get("/api/files/hidden_truth.csv")
        assert response.status == 404
        assert (await response.json())["error"] == "NotFound"
    assert state.submissions == []


@pytest.mark.asyncio
async def test_hidden_truth_never_served(reconstruction_dir, reconstruction):
    state = _state(reconstruction_dir)
    hidden = reconstruction.hidden_truth.frame
    hidden_keys = set(zip(hidden["date"].dt.strftime("%Y-%m-%d"), hidden["store_id"], hidden["family"]))
    async with TestClient(TestServer(create_app(state))) as client:
        listing = await (await client.get("/api/files")).json()
        for entry in listing:
            body = await (await client.get(f"/api/files/{entry['name']}")).read()
            frame = pd.read_csv(io.BytesIO(body), dtype=str, keep_default_na=False)
            if "sales" not in frame.columns or "family" not in frame.columns:
                continue
            served = set(zip(frame["date"], frame["store_nbr"].astype(int), frame["family"]))
            assert not served & hidden_keys, entry["name"]
        for name in ("hidden_truth.csv", "..%2Fsealed%2Fhidden_truth.csv"):
            assert (await client.get(f"/api/files/{name}")).status == 404


@pytest.mark.asyncio
async def test_submissions_are_numbered_and_scored(reconstruction_dir, truth_submission):
    state = _state(reconstruction_dir)
    async with TestClient(TestServer(create_app(state))) as client:
        first = await (await client.post("/api/submit", data=truth_submission,
                                         headers={SUBMITTER_HEADER: "oracle"})).json()
        second = await (await client.post("/api/submit", data=_short(truth_submission))).json()
        assert (first["id"], second["id"]) == (1, 2)
        assert first["admissible"] and first["primary_score"] == 0.0
        assert not second["admissible"] and second["primary_score"] is None
        failed = [check for check in second["outcome"]["validity"] if not check["passed"]]
        assert any(check["check_id"] == "row_count" for check in failed)
        assert second["submitter"] == "anonymous"

        board = await (await client.get("/api/leaderboard")).json()
        assert board == [{"submitter": "oracle", "score": 0.0, "submission_id": 1}]
        history = await (await client.get("/api/submissions")).json()
        assert [record["id"] for record in history] == [1, 2]


@pytest.mark.asyncio
async def test_unreadable_and_limit(reconstruction_dir, truth_submission):
    state = _state(reconstruction_dir, max_submissions=3)
    async with TestClient(TestServer(create_app(state))) as client:
        response = await client.post("/api/submit", data=b"")
        assert response.status == 422
        for _ in range(3):
            assert (await client.post("/api/submit", data=truth_submission)).status == 200
        response = await client.post("/api/submit", data=truth_submission)
        assert response.status == 429
        assert (await response.json())["error"] == "SubmissionLimitReached"
    assert len(state.submissions) == 3


@pytest.mark.asyncio
async def test_concurrent_submissions_keep_order(reconstruction_dir, truth_submission):
    state = _state(reconstruction_dir)
    records = await asyncio.gather(*(state.handle_submission(truth_submission, f"s{i}") for i in range(5)))
    assert sorted(record.id for record in records) == [1, 2, 3, 4, 5]
    assert [record.id for record in state.submissions] == [1, 2, 3, 4, 5]


@pytest.mark.asyncio
async def test_restart_from_log(reconstruction_dir, truth_submission):
    state = _state(reconstruction_dir)
    await state.handle_submission(truth_submission, "a")
    await state.handle_submission(_short(truth_submission), "b")
    await state.handle_submission(truth_submission, "b")

    restored = _state(reconstruction_dir)
    assert [r.to_dict() for r in restored.submissions] == [r.to_dict() for r in state.submissions]
    assert restored.leaderboard() == state.leaderboard()


def test_corrupt_log(tmp_path):
    log = SubmissionLog(tmp_path / SUBMISSION_LOG_FILE)
    log.append(_record(1, "a", 0.1))
    log.append(_record(3, "a", 0.2))
    with pytest.raises(CorruptState):
        log.restore()
    (tmp_path / SUBMISSION_LOG_FILE).write_text("{not json\n")
    with pytest.raises(CorruptState):
        log.restore()


def test_record_round_trip():
    record = _record(1, "a", 0.25)
    again = SubmissionRecord.from_dict(json.loads(json.dumps(record.to_dict())))
    assert again == record
    with pytest.raises(ValueError):
        _record(0, "a", 0.25)


@pytest.mark.asyncio
async def test_serve_binds_and_client_talks(reconstruction_dir, truth_submission):
    state = _state(reconstruction_dir)
    server = await serve(state)
    try:
        assert server.port > 0
        assert server.endpoint == f"http://127.0.0.1:{server.port}/api"
        async with TaskServerClient(server.endpoint) as client:
            names = [entry["name"] for entry in await client.list_files()]
            assert "train.csv" in names
            assert await client.download("test.csv") == state.public_files["test.csv"]
            with pytest.raises(MissingRawFile):
                await client.download("nope.csv")
            record = await client.submit(truth_submission, "client")
            assert record["admissible"]
            with pytest.raises(UnreadablePayload):
                await client.submit(b"", "client")
            assert [row["submitter"] for row in await client.leaderboard()] == ["client"]
            assert len(await client.submissions()) == 1
    finally:
        await server.stop()


@pytest.mark.asyncio
async def test_client_maps_limit(reconstruction_dir, truth_submission):
    state = _state(reconstruction_dir, log=False, max_submissions=1)
    async with TaskServer(state) as server:
        async with TaskServerClient(server.endpoint) as client:
            await client.submit(truth_submission, "x")
            with pytest.raises(SubmissionLimitReached):
                await client.submit(truth_submission, "x")


@pytest.mark.asyncio
async def test_port_unavailable(reconstruction_dir):
    state = _state(reconstruction_dir, log=False)
    async with TaskServer(state) as first:
        assert not port_available(first.port)
        with pytest.raises(PortUnavailable):
            await TaskServer(state, port=first.port).start()


def test_free_port_helpers():
    port = find_free_port()
    assert port > 0
    assert port_available(0)
    assert BindAddress("127.0.0.1", port).url == f"http://127.0.0.1:{port}"


@pytest.mark.asyncio
async def test_client_retries_then_gives_up(mocker):
    session = AsyncMock(aiohttp.ClientSession)
    session.closed = False
    session.get.side_effect = aiohttp.ClientConnectionError("refused")
    sleep = mocker.patch("forecast_harness.server.client.asyncio.sleep", new=AsyncMock())
    client = TaskServerClient("http://127.0.0.1:9/api", http_retries=3, session=session)
    with pytest.raises(ServerUnreachable):
        await client.list_files()
    assert session.get.call_count == 3
    assert sleep.await_count == 2


@pytest.mark.asyncio
async def test_submit_is_not_resent_after_a_read_timeout():
    received = []

    async def slow_submit(request):
        received.append(await request.read())
        await asyncio.sleep(1)
        return web.json_response({"id": 1, "admissible": False})

    app = web.Application()
    app.router.add_post("/api/submit", slow_submit)
    async with TestServer(app) as server:
        async with TaskServerClient(str(server.make_url("/api")), http_timeout=0.2, http_retries=3) as client:
            with pytest.raises(ServerUnreachable, match="not retried"):
                await client.submit(b"id,sales\n1,2\n", "x")
    assert received == [b"id,sales\n1,2\n"]


@pytest.mark.asyncio
async def test_submit_retries_when_nothing_listens(mocker):
    sleep = mocker.patch("forecast_harness.server.client.asyncio.sleep", new=AsyncMock())
    async with TaskServerClient(f"http://127.0.0.1:{find_free_port()}/api", http_retries=2) as client:
        with pytest.raises(ServerUnreachable, match="after 2 attempts"):
            await client.submit(b"id,sales\n1,2\n", "x")
    assert sleep.await_count == 1


def test_client_rejects_bad_endpoint():
    with pytest.raises(ValueError):
        TaskServerClient("ftp://example")


def test_history_ends_at_cutoff(reconstruction_dir):
    state = _state(reconstruction_dir, log=False)
    assert state.history.dates()[-1] == CUTOFF
    assert state.hidden_truth.dates()[0] == CUTOFF + datetime.timedelta(days=1)
