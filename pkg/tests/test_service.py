"""Service tests: frame handling, the WebSocket dialogue, HTTP reads, auth."""

import json

import pytest
from starlette.testclient import TestClient
from starlette.websockets import WebSocketDisconnect

from embercoach.service import ServiceConfig, create_app, dispatch, handle_frame
from embercoach.wire import MessageType, WireError, parse_message

from test_runtime import SCENARIO_ID, drive_full_session, make_runtime, utter


def frame(mtype: str, sid: str, seq: int, body: dict | None = None) -> str:
    return json.dumps({"type": mtype, "session_id": sid, "seq": seq, "body": body or {}})


def start_frame(sid: str, seq: int = 1, **body) -> str:
    body.setdefault("scenario_id", SCENARIO_ID)
    return frame("session.start", sid, seq, body)


def recv(ws):
    return parse_message(ws.receive_text())


@pytest.fixture()
def rt(tmp_path):
    return make_runtime(tmp_path / "store")


@pytest.fixture()
def client(rt):
    app = create_app(rt, ServiceConfig(auto_tick=False))
    with TestClient(app) as c:
        yield c


# --- handle_frame ------------------------------------------------------------------


class TestHandleFrame:
    def test_unparseable_frame_answers_anonymous_error(self, rt):
        msg, out = handle_frame(rt, "{nope")
        assert msg is None
        (err,) = out
        assert err.type is MessageType.ERROR
        assert err.session_id == "-"
        assert err.seq == 0
        assert err.body["code"] == "malformed"
        assert err.body["message"].startswith("not valid JSON")
        assert "echo_seq" not in err.body

    def test_valid_frame_dispatches(self, rt):
        msg, out = handle_frame(rt, start_frame("s1"))
        assert msg.type is MessageType.SESSION_START
        assert [m.type for m in out] == [MessageType.STAGE_STATE, MessageType.ADVICE_PHASE]

    def test_engine_rejection_becomes_error_frame_outside_the_outbox(self, rt):
        handle_frame(rt, start_frame("s1", seq=1))
        before = list(rt.states["s1"].outbox)
        msg, out = handle_frame(rt, start_frame("s1", seq=2))
        (err,) = out
        assert err.type is MessageType.ERROR
        assert err.seq == 0
        assert err.body["code"] == "conflict"
        assert err.body["echo_seq"] == 2
        assert "already started" in err.body["message"]
        # Rejected operations never enter the resumable outbox.
        assert rt.states["s1"].outbox == before

    def test_server_types_are_not_client_operations(self, rt):
        msg, out = handle_frame(
            rt, frame("stage.state", "s1", 1, {"nodes": []})
        )
        (err,) = out
        assert err.body["code"] == "unknown-type"
        assert err.body["message"] == "stage.state is not a client message"

    def test_unconvertible_values_degrade_to_malformed(self, rt):
        msg, out = handle_frame(rt, start_frame("s1", at="noon"))
        (err,) = out
        assert err.body["code"] == "malformed"
        assert err.body["message"].startswith("ValueError:")

    def test_dispatch_raises_for_server_types(self, rt):
        with pytest.raises(WireError):
            dispatch(rt, parse_message(frame("report.ready", "s1", 1, {"report": {}})))


# --- the WebSocket dialogue -----------------------------------------------------------


class TestWebSocket:
    def test_game_start_returns_state_then_advice(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(start_frame("s1"))
            first, second = recv(ws), recv(ws)
        assert first.type is MessageType.STAGE_STATE
        assert first.seq == 1
        assert first.body["active"] == "S1"
        assert second.type is MessageType.ADVICE_PHASE
        assert second.seq == 2

    def test_errors_are_transient_and_do_not_consume_seq(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(start_frame("s1", seq=1))
            recv(ws), recv(ws)

            ws.send_text("this is not json")
            err = recv(ws)
            assert err.type is MessageType.ERROR
            assert err.seq == 0

            ws.send_text(start_frame("s1", seq=2))
            err = recv(ws)
            assert err.body["code"] == "conflict"
            assert err.body["echo_seq"] == 2

            ws.send_text(
                frame(
                    "utterance.push",
                    "s1",
                    3,
                    {
                        "turn_index": 0,
                        "speaker": "parent",
                        "text": "Tell me about it.",
                        "t_start": 1.0,
                        "t_end": 2.0,
                        "stage": "S1",
                    },
                )
            )
            state = recv(ws)
            assert state.type is MessageType.STAGE_STATE
            assert state.seq == 3  # the two errors took no sequence numbers

    def test_reconnect_resends_everything_past_last_seq(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(start_frame("s1"))
            recv(ws), recv(ws)
            ws.send_text(frame("image.request", "s1", 2, {"at": 1.0}))
            image = recv(ws)
            assert image.seq == 3

        with client.websocket_connect("/ws?session_id=s1&last_seq=1") as ws:
            resent = [recv(ws), recv(ws)]
        assert [m.seq for m in resent] == [2, 3]
        assert [m.type for m in resent] == [MessageType.ADVICE_PHASE, MessageType.IMAGE_READY]

        # A full replay from zero includes all three, in order.
        with client.websocket_connect("/ws?session_id=s1&last_seq=0") as ws:
            assert [recv(ws).seq for _ in range(3)] == [1, 2, 3]

    def test_resume_of_unknown_session_sends_nothing(self, client):
        with client.websocket_connect("/ws?session_id=ghost&last_seq=0") as ws:
            ws.send_text(start_frame("s2"))
            first = recv(ws)
        assert first.type is MessageType.STAGE_STATE
        assert first.session_id == "s2"

    def test_interview_over_the_wire(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(frame("session.start", "iv1", 1, {"mode": "interview", "child_id": "kid"}))
            question = recv(ws)
            assert question.type is MessageType.INTERVIEW_QUESTION
            assert question.body["question"]["id"] == "q1"

            ws.send_text(
                frame(
                    "interview.answer",
                    "iv1",
                    2,
                    {"question_id": "q1", "text": "She sings to herself.", "at": 1.0},
                )
            )
            update, nxt = recv(ws), recv(ws)
            assert update.type is MessageType.PROFILE_UPDATED
            assert update.body["child_id"] == "kid"
            assert nxt.type is MessageType.INTERVIEW_QUESTION
            assert nxt.body["question"]["id"] == "q2"


# --- auth ------------------------------------------------------------------------------


class TestAuth:
    @pytest.fixture()
    def secured(self, rt):
        app = create_app(rt, ServiceConfig(token="sesame", auto_tick=False))
        with TestClient(app) as c:
            yield c

    def test_health_needs_no_token(self, secured):
        assert secured.get("/api/health").json() == {"status": "ok"}

    def test_http_reads_require_the_token(self, secured):
        assert secured.get("/api/scenarios").status_code == 401
        assert secured.get("/api/scenarios", headers={"x-auth-token": "wrong"}).status_code == 401
        ok = secured.get("/api/scenarios", headers={"x-auth-token": "sesame"})
        assert ok.status_code == 200
        assert secured.get("/api/scenarios?token=sesame").status_code == 200

    def test_websocket_requires_the_token(self, secured):
        # the server accepts, then closes 4401, so real clients see the code
        with pytest.raises(WebSocketDisconnect) as exc:
            with secured.websocket_connect("/ws") as ws:
                ws.receive_text()
        assert exc.value.code == 4401

        with secured.websocket_connect("/ws?token=sesame") as ws:
            ws.send_text(start_frame("s1"))
            assert recv(ws).type is MessageType.STAGE_STATE


# --- HTTP reads -------------------------------------------------------------------------


class TestHttp:
    def test_scenarios_lists_the_catalog(self, client, rt):
        doc = client.get("/api/scenarios").json()
        assert {s["id"] for s in doc["scenarios"]} == set(rt.registry.catalog)

    def test_profile_read_hides_bookkeeping(self, client, rt):
        assert client.get("/api/children/kid/profile").status_code == 404

        rt.start_session("s1", scenario_id=SCENARIO_ID, child_id="kid")
        for i, text in enumerate(
            ["One.", "Two.", "Three.", "Four.", "I squeezed my fists and counted."]
        ):
            utter(rt, "s1", i, "child" if i % 2 else "parent", text, float(i), i + 0.5)

        doc = client.get("/api/children/kid/profile").json()
        assert doc["child_id"] == "kid"
        assert doc["version"] == 1
        assert "applied_keys" not in doc
        # The store copy still carries the keys; only the API view drops them.
        stored = rt.store.read_json(rt.store.profile_path("kid"))
        assert "applied_keys" in stored

    def test_report_read(self, client, rt):
        assert client.get("/api/sessions/s1/report").status_code == 404
        drive_full_session(rt)
        doc = client.get("/api/sessions/s1/report").json()
        assert doc == rt.store.read_json(rt.store.report_path("s1"))


# --- server-driven clock ------------------------------------------------------------------


def test_auto_tick_delivers_realtime_advice(rt):
    app = create_app(rt, ServiceConfig(auto_tick=True, tick_interval_s=30.0))
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.send_text(start_frame("s1"))
            kinds = [recv(ws).type for _ in range(3)]
    assert kinds == [
        MessageType.STAGE_STATE,
        MessageType.ADVICE_PHASE,
        MessageType.ADVICE_REALTIME,  # the first server tick always advises
    ]
