"""Session runtime: event-sourced orchestration of engines and effects.

Every accepted operation becomes one event in the session's append-only
log. Handlers validate and mutate first (failures leave no trace), append
the event (the commit point), then run effects: model calls, persistence,
and outbound wire messages. Replaying a log through the same handlers with
the same scripted provider rebuilds state, artifacts, and the outbound
message stream byte for byte.

Side effects that would not be idempotent under re-application (profile
integration) are guarded by idempotency keys recorded in the profile
document, so crash recovery can replay a log against a store that already
absorbed part of it.
"""

from __future__ import annotations

import base64
import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

from .content import (
    Badge,
    BadgeHistory,
    ContentGenerator,
    PromptLibrary,
    Reward,
    load_badge_catalog,
)
from .domain import Scenario, Speaker, Transcript, Utterance
from .engine import (
    ClosedSessionError,
    ConflictError,
    Effect,
    EffectKind,
    EngineConfig,
    EngineError,
    NotFoundError,
    SequencingError,
    SessionEngine,
    SessionRegistry,
    assess_stage_completion,
)
from .gateway import AudioChunk, Gateway, ModelRequest, PromptPart, Task
from .modeling import (
    ChildEmotionalProfile,
    EntrySource,
    InterviewPrompt,
    InterviewQuestion,
    InterviewState,
    ProfileExtractor,
    compare_sources,
    gateway_decider,
    integrate_entries,
    load_interview_questions,
    next_interview_question,
    record_answer,
)
from .store import SessionStore
from .wire import MessageType, WireMessage

log = logging.getLogger(__name__)

REALTIME_WINDOW_TURNS = 6  # how many trailing turns rapid advice sees


class TranscriptionError(EngineError):
    code = "transcription-failed"


class AgentReplyError(EngineError):
    code = "agent-reply-failed"


@dataclass
class SessionState:
    """Everything the runtime tracks for one session beyond the engine."""

    session_id: str
    child_id: str
    mode: str  # "game" | "interview"
    engine: SessionEngine | None = None
    interview: InterviewState | None = None
    last_prompt: InterviewPrompt | None = None
    advice_log: list[dict[str, Any]] = field(default_factory=list)
    reward: Reward | None = None
    outbox: list[WireMessage] = field(default_factory=list)
    out_seq: int = 0
    adv_n: int = 0
    img_n: int = 0
    ent_n: int = 0
    extraction_seq: int = 0
    ended: bool = False

    @property
    def closed(self) -> bool:
        return self.ended or (self.engine is not None and self.engine.finished)


@dataclass
class ReplayOutcome:
    session_ids: list[str]
    outbox: list[WireMessage]
    applied: int
    halted_at: int | None = None  # 1-based index of the event that failed
    error: str | None = None


class CoachRuntime:
    """Single-writer orchestrator over one store.

    All mutating entry points are synchronous and must be called from one
    thread (or behind one lock); model calls happen inside them.
    """

    def __init__(
        self,
        store: SessionStore,
        gateway: Gateway,
        catalog: Sequence[Scenario],
        *,
        questions: Sequence[InterviewQuestion] | None = None,
        badge_catalog: Sequence[Badge] | None = None,
        engine_config: EngineConfig | None = None,
        max_followups: int = 2,
        prompts: PromptLibrary | None = None,
    ):
        self.store = store
        self.gateway = gateway
        self.registry = SessionRegistry(catalog, engine_config)
        prompts = prompts or PromptLibrary()
        self.generator = ContentGenerator(gateway, prompts=prompts)
        self.extractor = ProfileExtractor(gateway, prompts.get("extract_profile"))
        self.decider = gateway_decider(gateway, prompts.get("interview_decision"))
        self.questions = list(questions) if questions is not None else load_interview_questions()
        self.badge_catalog = list(badge_catalog) if badge_catalog is not None else load_badge_catalog()
        self.max_followups = max_followups
        self.states: dict[str, SessionState] = {}
        self._profiles: dict[str, ChildEmotionalProfile] = {}
        # Idempotency keys per child: extraction events already folded into
        # the persisted profile, so replays never double-integrate.
        self._applied_keys: dict[str, dict[str, Any]] = {}
        if not store.catalog_path().exists():
            store.write_json(store.catalog_path(), {"scenarios": [s.to_dict() for s in catalog]})

    # -- public operations (wire-facing) --------------------------------------

    def start_session(
        self,
        session_id: str,
        *,
        scenario_id: str | None = None,
        child_id: str = "default",
        mode: str = "game",
        at: float = 0.0,
    ) -> list[WireMessage]:
        event: dict[str, Any] = {
            "kind": "start",
            "session_id": session_id,
            "at": at,
            "mode": mode,
            "child_id": child_id,
        }
        if mode == "game":
            if not scenario_id:
                raise NotFoundError("session.start requires a scenario_id")
            event["scenario_id"] = scenario_id
        elif mode != "interview":
            raise SequencingError(f"unknown session mode {mode!r}")
        return self._h_start(event, record=True)

    def push_utterance(self, session_id: str, payload: dict[str, Any]) -> list[WireMessage]:
        state = self._state(session_id)
        text = payload.get("text")
        if text is None:
            # Audio path: resolve to text before anything commits.
            segments = self.gateway.transcribe(
                [AudioChunk(index=0, label=str(payload["audio"]))],
                request_id=f"{session_id}-stt{payload['turn_index']}",
            )
            if segments[0].failed or not segments[0].text:
                raise TranscriptionError(
                    "could not transcribe the audio chunk; send the text instead"
                )
            text = segments[0].text
        utterance = {
            "turn_index": payload["turn_index"],
            "speaker": payload["speaker"],
            "text": text,
            "t_start": payload["t_start"],
            "t_end": payload["t_end"],
            "stage": payload["stage"],
        }
        event = {
            "kind": "utterance",
            "session_id": session_id,
            "at": payload["t_start"],
            "utterance": utterance,
        }
        if "audio" in payload:
            event["audio_label"] = payload["audio"]
        return self._h_utterance(event, record=True)

    def advance_stage(self, session_id: str, at: float | None = None) -> list[WireMessage]:
        state = self._require_game(session_id)
        t = state.engine.clock.now if at is None else at
        event = {"kind": "advance", "session_id": session_id, "at": t}
        return self._h_advance(event, record=True)

    def tick(self, session_id: str, at: float) -> list[WireMessage]:
        event = {"kind": "tick", "session_id": session_id, "at": at}
        return self._h_tick(event, record=True)

    def invoke_agent(self, session_id: str, at: float | None = None) -> list[WireMessage]:
        state = self._require_game(session_id)
        engine = state.engine
        if engine.finished or state.ended:
            raise ClosedSessionError(f"session {session_id} is closed")
        stage = engine.active_stage()
        t = engine.clock.now if at is None else max(at, engine.clock.now)
        window = engine.transcript_utterances[-REALTIME_WINDOW_TURNS:]
        try:
            text, _audio = self.generator.agent_reply(
                engine.scenario, stage, window, request_id=f"{session_id}-agent"
            )
        except RuntimeError as e:
            raise AgentReplyError(str(e)) from e
        # The resolved reply is part of the event so the log stays the sole
        # source of truth for transcript content.
        event = {"kind": "agent-invoke", "session_id": session_id, "at": t, "text": text}
        return self._h_agent_invoke(event, record=True)

    def request_image(self, session_id: str, at: float | None = None) -> list[WireMessage]:
        state = self._require_game(session_id)
        t = state.engine.clock.now if at is None else at
        event = {"kind": "image-request", "session_id": session_id, "at": t}
        return self._h_image_request(event, record=True)

    def answer_interview(
        self, session_id: str, question_id: str, text: str, at: float = 0.0
    ) -> list[WireMessage]:
        event = {
            "kind": "interview-answer",
            "session_id": session_id,
            "at": at,
            "question_id": question_id,
            "text": text,
        }
        return self._h_interview_answer(event, record=True)

    def end_session(self, session_id: str, at: float | None = None) -> list[WireMessage]:
        state = self._state(session_id)
        if state.ended:
            raise ClosedSessionError(f"session {session_id} already ended")
        t = at
        if t is None:
            t = state.engine.clock.now if state.engine is not None else 0.0
        event = {"kind": "end", "session_id": session_id, "at": t}
        return self._h_end(event, record=True)

    # -- replay and recovery -----------------------------------------------------

    def apply_event(self, event: dict[str, Any], *, record: bool = False) -> list[WireMessage]:
        kind = event.get("kind")
        handler = {
            "start": self._h_start,
            "utterance": self._h_utterance,
            "advance": self._h_advance,
            "tick": self._h_tick,
            "agent-invoke": self._h_agent_invoke,
            "image-request": self._h_image_request,
            "interview-answer": self._h_interview_answer,
            "end": self._h_end,
        }.get(kind)
        if handler is None:
            raise SequencingError(f"unknown event kind {kind!r}")
        return handler(event, record=record)

    def replay_events(self, events: Sequence[dict[str, Any]]) -> ReplayOutcome:
        """Apply logged events in order without re-recording them.

        Halts at the first event the engine rejects and reports its 1-based
        position; everything before it stands.
        """
        outbox: list[WireMessage] = []
        sids: list[str] = []
        for i, event in enumerate(events, 1):
            sid = event.get("session_id")
            if sid and sid not in sids:
                sids.append(sid)
            try:
                outbox.extend(self.apply_event(event, record=False))
            except EngineError as e:
                return ReplayOutcome(
                    session_ids=sids,
                    outbox=outbox,
                    applied=i - 1,
                    halted_at=i,
                    error=f"{type(e).__name__}: {e}",
                )
        return ReplayOutcome(session_ids=sids, outbox=outbox, applied=len(events))

    def recover(self) -> list[str]:
        """Rebuild live sessions from their event logs after a restart.

        Sessions whose log already ended or finished stay on disk untouched;
        only unfinished ones come back into memory, ready for more events.
        Returns the recovered session ids.
        """
        recovered: list[str] = []
        for sid in self.store.list_sessions():
            if sid in self.states:
                continue
            path = self.store.event_log_path(sid)
            if not path.exists():
                continue
            result = self.store.read_events(sid)
            if result.corrupt_line is not None:
                log.warning(
                    "session %s: event log corrupt at line %d; replaying the %d events before it",
                    sid,
                    result.corrupt_line,
                    len(result.events),
                )
                # Drop the torn tail so events accepted after this recovery
                # land on a clean log instead of hiding behind the bad line.
                self.store.rewrite_events(sid, result.events)
            if not result.events:
                continue
            if any(e.get("kind") == "end" for e in result.events):
                continue
            advances = sum(1 for e in result.events if e.get("kind") == "advance")
            finished = advances >= 5
            if finished and self.store.report_path(sid).exists():
                continue  # finished and fully persisted; nothing to recover
            outcome = self.replay_events(result.events)
            if outcome.halted_at is not None:
                log.warning(
                    "session %s: replay halted at event %d: %s",
                    sid,
                    outcome.halted_at,
                    outcome.error,
                )
            if finished:
                # Crash happened between the final advance and persistence;
                # replay just regenerated the artifacts. Drop it from memory.
                self.states.pop(sid, None)
                self.registry.sessions.pop(sid, None)
            else:
                recovered.append(sid)
        return recovered

    # -- internals ------------------------------------------------------------------

    def _state(self, session_id: str) -> SessionState:
        state = self.states.get(session_id)
        if state is None:
            raise NotFoundError(f"unknown session {session_id!r}")
        return state

    def _require_game(self, session_id: str) -> SessionState:
        state = self._state(session_id)
        if state.mode != "game" or state.engine is None:
            raise SequencingError(f"session {session_id} is not a conversation session")
        return state

    def _profile(self, child_id: str) -> ChildEmotionalProfile:
        profile = self._profiles.get(child_id)
        if profile is None:
            path = self.store.profile_path(child_id)
            if path.exists():
                doc = self.store.read_json(path)
                self._applied_keys[child_id] = doc.pop("applied_keys", {})
                profile = ChildEmotionalProfile.from_dict(doc)
            else:
                profile = ChildEmotionalProfile(child_id=child_id)
                self._applied_keys[child_id] = {}
            self._profiles[child_id] = profile
        return profile

    def _persist_profile(self, profile: ChildEmotionalProfile) -> None:
        doc = profile.to_dict()
        doc["applied_keys"] = self._applied_keys.get(profile.child_id, {})
        self.store.write_json(self.store.profile_path(profile.child_id), doc)

    def _send(self, state: SessionState, mtype: MessageType, body: dict[str, Any]) -> WireMessage:
        state.out_seq += 1
        msg = WireMessage(type=mtype, session_id=state.session_id, seq=state.out_seq, body=body)
        state.outbox.append(msg)
        return msg

    def _stage_state_body(self, state: SessionState, *, degraded: bool = False) -> dict[str, Any]:
        graph = state.engine.graph
        active = graph.active_stage()
        body: dict[str, Any] = {
            "nodes": [n.to_dict() for n in graph.nodes],
            "active": active.value if active else None,
            "finished_at": graph.finished_at,
        }
        if degraded:
            body["assessment_degraded"] = True
        return body

    def _persist_advice(self, state: SessionState) -> None:
        self.store.write_json(
            self.store.advice_path(state.session_id),
            {"session_id": state.session_id, "items": state.advice_log},
        )

    def _persist_transcript_graph(self, state: SessionState) -> None:
        engine = state.engine
        transcript = Transcript(
            session_id=state.session_id,
            scenario_id=engine.scenario.id,
            utterances=list(engine.transcript_utterances),
            session_t_end=engine.clock.now,
        )
        self.store.write_json(self.store.transcript_path(state.session_id), transcript.to_dict())
        self.store.write_json(self.store.graph_path(state.session_id), engine.graph.to_dict())

    # -- event handlers ---------------------------------------------------------------
    # Discipline: validate + mutate in-memory state first (failure leaves no
    # trace), then append the event, then run effects and build outbound.

    def _h_start(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        sid = event["session_id"]
        mode = event.get("mode", "game")
        child_id = event.get("child_id", "default")
        at = float(event.get("at", 0.0))
        if sid in self.states:
            raise ConflictError(f"session {sid!r} already started")
        out: list[WireMessage] = []
        if mode == "game":
            profile = self._profile(child_id)
            engine, effects = self.registry.start_session(
                sid, event["scenario_id"], at=at, profile=profile
            )
            state = SessionState(session_id=sid, child_id=child_id, mode="game", engine=engine)
            self.states[sid] = state
            if record:
                self.store.append_event(sid, event)
            out.append(self._send(state, MessageType.STAGE_STATE, self._stage_state_body(state)))
            out.extend(self._run_effects(state, effects, at=at))
        else:
            interview = InterviewState(questions=list(self.questions))
            state = SessionState(
                session_id=sid, child_id=child_id, mode="interview", interview=interview
            )
            prompt = (
                InterviewPrompt(
                    question_id=interview.questions[0].id,
                    facet=interview.questions[0].facet,
                    text=interview.questions[0].text,
                )
                if interview.questions
                else None
            )
            state.last_prompt = prompt
            self.states[sid] = state
            if record:
                self.store.append_event(sid, event)
            out.append(self._send(state, MessageType.INTERVIEW_QUESTION, _question_body(prompt)))
        return out

    def _h_utterance(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._require_game(event["session_id"])
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        u = Utterance.from_dict(event["utterance"])
        effects = state.engine.ingest_utterance(u)
        if record:
            self.store.append_event(state.session_id, event)
        return self._run_effects(state, effects, at=state.engine.clock.now)

    def _h_advance(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._require_game(event["session_id"])
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        effects = state.engine.advance_stage(event["at"])
        if record:
            self.store.append_event(state.session_id, event)
        out = [self._send(state, MessageType.STAGE_STATE, self._stage_state_body(state))]
        out.extend(self._run_effects(state, effects, at=event["at"]))
        return out

    def _h_tick(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._require_game(event["session_id"])
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        effects = state.engine.tick(event["at"])
        # Even a no-op tick is a legal clock move and gets logged, so replay
        # sees the identical clock history.
        if record:
            self.store.append_event(state.session_id, event)
        return self._run_effects(state, effects, at=event["at"])

    def _h_agent_invoke(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._require_game(event["session_id"])
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        engine = state.engine
        stage = engine.active_stage()
        if stage is None:
            raise ClosedSessionError(f"session {state.session_id} is finished")
        t = float(event["at"])
        text = event["text"]
        u = Utterance(
            turn_index=len(engine.transcript_utterances),
            speaker=Speaker.AGENT,
            text=text,
            t_start=t,
            t_end=t,
            stage=stage,
        )
        effects = engine.ingest_utterance(u)
        if record:
            self.store.append_event(state.session_id, event)
        audio_resp = self.gateway.invoke(
            ModelRequest(
                task=Task.SYNTHESIZE,
                parts=(PromptPart("user", text),),
                request_id=f"{state.session_id}-tts{u.turn_index}",
            )
        )
        audio_b64 = (
            base64.b64encode(audio_resp.payload).decode("ascii")
            if audio_resp.ok and isinstance(audio_resp.payload, bytes)
            else None
        )
        out = [
            self._send(
                state,
                MessageType.AGENT_REPLY,
                {"utterance": u.to_dict(), "audio_b64": audio_b64},
            )
        ]
        out.extend(self._run_effects(state, effects, at=engine.clock.now))
        return out

    def _h_image_request(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._require_game(event["session_id"])
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        engine = state.engine
        if record:
            self.store.append_event(state.session_id, event)
        state.img_n += 1
        window = engine.transcript_utterances[-REALTIME_WINDOW_TURNS:]
        handle = self.generator.scene_image(
            engine.scenario,
            window,
            image_id=f"{state.session_id}-img{state.img_n}",
            request_id=f"{state.session_id}-img{state.img_n}",
        )
        return [self._send(state, MessageType.IMAGE_READY, {"image": handle.to_dict()})]

    def _h_interview_answer(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._state(event["session_id"])
        if state.mode != "interview" or state.interview is None:
            raise SequencingError(f"session {state.session_id} is not an interview")
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        prompt = state.last_prompt
        if prompt is None:
            raise SequencingError("the interview has no open question")
        if event["question_id"] != prompt.question_id:
            raise SequencingError(
                f"answer targets {event['question_id']!r} but the open question is "
                f"{prompt.question_id!r}"
            )
        text = str(event["text"])
        record_answer(state.interview, prompt, text)
        if record:
            self.store.append_event(state.session_id, event)
        at = float(event.get("at", 0.0))
        out: list[WireMessage] = []
        out.extend(
            self._integrate_text(
                state,
                text,
                EntrySource.PARENT_INTERVIEW,
                evidence=[f"{state.session_id}:{prompt.question_id}"],
                at=at,
            )
        )
        next_prompt = next_interview_question(
            state.interview, text, self.decider, max_followups=self.max_followups
        )
        state.last_prompt = next_prompt
        out.append(self._send(state, MessageType.INTERVIEW_QUESTION, _question_body(next_prompt)))
        return out

    def _h_end(self, event: dict[str, Any], *, record: bool) -> list[WireMessage]:
        state = self._state(event["session_id"])
        if state.ended:
            raise ClosedSessionError(f"session {state.session_id} already ended")
        state.ended = True
        if record:
            self.store.append_event(state.session_id, event)
        if state.engine is not None:
            self._persist_transcript_graph(state)
            self._persist_advice(state)
        else:
            profile = self._profile(state.child_id)
            compare_sources(profile)
            self._persist_profile(profile)
        return []

    # -- effects -------------------------------------------------------------------

    def _run_effects(
        self, state: SessionState, effects: list[Effect], *, at: float
    ) -> list[WireMessage]:
        out: list[WireMessage] = []
        engine = state.engine
        for effect in effects:
            if effect.kind is EffectKind.PHASE_ADVICE_DUE:
                state.adv_n += 1
                item = self.generator.phase_advice(
                    effect.stage,
                    engine.scenario,
                    engine.profile,
                    engine.transcript_utterances,
                    item_id=f"{state.session_id}-adv{state.adv_n}",
                    created_at=at,
                    request_id=f"{state.session_id}-adv{state.adv_n}",
                )
                state.advice_log.append(item.to_dict())
                self._persist_advice(state)
                out.append(self._send(state, MessageType.ADVICE_PHASE, {"advice": item.to_dict()}))
            elif effect.kind is EffectKind.REALTIME_ADVICE_DUE:
                state.adv_n += 1
                window = engine.transcript_utterances[-REALTIME_WINDOW_TURNS:]
                item = self.generator.realtime_advice(
                    effect.stage,
                    engine.scenario,
                    window,
                    item_id=f"{state.session_id}-adv{state.adv_n}",
                    created_at=at,
                    request_id=f"{state.session_id}-adv{state.adv_n}",
                )
                state.advice_log.append(item.to_dict())
                self._persist_advice(state)
                out.append(
                    self._send(state, MessageType.ADVICE_REALTIME, {"advice": item.to_dict()})
                )
            elif effect.kind is EffectKind.COMPLETION_REASSESSMENT_DUE:
                outcome = assess_stage_completion(engine, self.generator.score_stage)
                out.append(
                    self._send(
                        state,
                        MessageType.STAGE_STATE,
                        self._stage_state_body(state, degraded=outcome.degraded),
                    )
                )
            elif effect.kind is EffectKind.PROFILE_EXTRACTION_DUE:
                window = engine.transcript_utterances[-engine.config.profile_update_turns :]
                text = "\n".join(f"{u.speaker.value}: {u.text}" for u in window)
                out.extend(
                    self._integrate_text(
                        state,
                        text,
                        EntrySource.CONVERSATION_ANALYSIS,
                        evidence=[f"{state.session_id}:u{u.turn_index}" for u in window],
                        at=at,
                    )
                )
            elif effect.kind is EffectKind.REWARD_DUE:
                state.reward = self.generator.reward(
                    engine.graph, request_id=f"{state.session_id}-reward"
                )
            elif effect.kind is EffectKind.REPORT_DUE:
                out.append(self._finish_session(state))
        return out

    def _integrate_text(
        self,
        state: SessionState,
        text: str,
        source: EntrySource,
        *,
        evidence: list[str],
        at: float,
    ) -> list[WireMessage]:
        """Extract entries from text and fold them into the child profile,
        exactly once per (session, extraction_seq) even across replays."""
        profile = self._profile(state.child_id)
        state.extraction_seq += 1
        key = f"{state.session_id}:x{state.extraction_seq}"
        applied = self._applied_keys.setdefault(state.child_id, {})
        if key in applied:
            # Already folded in before a crash; re-emit the recorded outcome.
            body = {
                "child_id": state.child_id,
                "version": applied[key]["version"],
                "new_entry_ids": list(applied[key]["entry_ids"]),
            }
            if applied[key].get("degraded"):
                body["degraded"] = True
            return [self._send(state, MessageType.PROFILE_UPDATED, body)]
        result = self.extractor.extract(
            text,
            source,
            evidence=evidence,
            created_at=at,
            make_id=lambda: self._next_entry_id(state),
            request_id=key,
        )
        integrate_entries(profile, result.entries)
        compare_sources(profile)
        stored_ids = {e.id for e in profile.entries}
        affected: list[str] = []
        for entry in result.entries:
            if entry.id in stored_ids:
                target_id = entry.id  # appended as a new entry
            else:
                # merged away: its evidence was unioned into the target
                target_id = next(
                    (
                        e.id
                        for e in profile.entries
                        if set(entry.evidence) <= set(e.evidence)
                    ),
                    None,
                )
            if target_id and target_id not in affected:
                affected.append(target_id)
        applied[key] = {
            "version": profile.version,
            "entry_ids": affected,
            "degraded": result.degraded,
        }
        self._persist_profile(profile)
        body = {
            "child_id": state.child_id,
            "version": profile.version,
            "new_entry_ids": affected,
        }
        if result.degraded:
            body["degraded"] = True
        return [self._send(state, MessageType.PROFILE_UPDATED, body)]

    def _next_entry_id(self, state: SessionState) -> str:
        state.ent_n += 1
        return f"{state.session_id}-p{state.ent_n}"

    def _finish_session(self, state: SessionState) -> WireMessage:
        """Reward is already computed; build the report, persist everything."""
        engine = state.engine
        profile = self._profile(state.child_id)
        history_path = self.store.badge_history_path()
        history = (
            BadgeHistory.from_dict(self.store.read_json(history_path))
            if history_path.exists()
            else BadgeHistory()
        )
        report = self.generator.feedback_report(
            engine.graph,
            engine.transcript_utterances,
            profile,
            badge_catalog=self.badge_catalog,
            history=history,
            request_id=f"{state.session_id}-report",
        )
        self.store.write_json(history_path, history.to_dict())
        self._persist_transcript_graph(state)
        self._persist_advice(state)
        self.store.write_json(self.store.report_path(state.session_id), report.to_dict())
        body = {"report": report.to_dict()}
        if state.reward is not None:
            body["reward"] = state.reward.to_dict()
        return self._send(state, MessageType.REPORT_READY, body)


# --- helpers ----------------------------------------------------------------------


def _question_body(prompt: InterviewPrompt | None) -> dict[str, Any]:
    if prompt is None:
        return {"done": True}
    body: dict[str, Any] = {
        "question": {
            "id": prompt.question_id,
            "facet": prompt.facet.value,
            "text": prompt.text,
        }
    }
    if prompt.followup_of:
        body["question"]["followup_of"] = prompt.followup_of
    return body


