"""Live session state: the five-stage graph, transitions, timers, triggers.

The engine is a deterministic state machine over session-relative time.
Mutating operations validate, apply, and return the effects they trigger;
the caller (runtime) is responsible for recording events and acting on
effects. Replaying the same events yields the same graph and effect
sequence, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

from .domain import STAGE_ORDER, Scenario, Speaker, StageId, Utterance


class EngineError(Exception):
    """Base for session-engine errors; `code` is the wire error code."""

    code = "internal"


class NotFoundError(EngineError):
    code = "not-found"


class ConflictError(EngineError):
    code = "conflict"


class SequencingError(EngineError):
    code = "sequencing"


class ClosedSessionError(EngineError):
    code = "closed-session"


class ClockError(EngineError):
    code = "clock"


class StageStatus(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    COMPLETE = "complete"


class EffectKind(str, Enum):
    """Work the runtime owes after an engine mutation commits."""

    PHASE_ADVICE_DUE = "phase-advice-due"
    REALTIME_ADVICE_DUE = "realtime-advice-due"
    PROFILE_EXTRACTION_DUE = "profile-extraction-due"
    COMPLETION_REASSESSMENT_DUE = "completion-reassessment-due"
    ASSESSMENT_DEGRADED = "assessment-degraded"
    REWARD_DUE = "reward-due"
    REPORT_DUE = "report-due"


@dataclass(frozen=True)
class Effect:
    kind: EffectKind
    stage: StageId | None = None


@dataclass
class StageNode:
    stage: StageId
    status: StageStatus = StageStatus.PENDING
    completion_level: float = 0.0
    entered_at: float | None = None
    exited_at: float | None = None
    turn_span: tuple[int, int] | None = None  # first/last turn_index seen in this stage

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage.value,
            "status": self.status.value,
            "completion_level": self.completion_level,
            "entered_at": self.entered_at,
            "exited_at": self.exited_at,
            "turn_span": list(self.turn_span) if self.turn_span else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StageNode":
        span = d.get("turn_span")
        return cls(
            stage=StageId(d["stage"]),
            status=StageStatus(d["status"]),
            completion_level=float(d.get("completion_level", 0.0)),
            entered_at=d.get("entered_at"),
            exited_at=d.get("exited_at"),
            turn_span=(int(span[0]), int(span[1])) if span else None,
        )


@dataclass
class ConversationGraph:
    """The linear five-node stage strip for one session."""

    session_id: str
    scenario_id: str
    nodes: list[StageNode]
    created_at: float = 0.0
    finished_at: float | None = None

    @classmethod
    def fresh(cls, session_id: str, scenario_id: str, at: float = 0.0) -> "ConversationGraph":
        nodes = [StageNode(stage=s) for s in STAGE_ORDER]
        nodes[0].status = StageStatus.ACTIVE
        nodes[0].entered_at = at
        return cls(session_id=session_id, scenario_id=scenario_id, nodes=nodes, created_at=at)

    def node(self, stage: StageId) -> StageNode:
        return self.nodes[stage.order - 1]

    def active_stage(self) -> StageId | None:
        for n in self.nodes:
            if n.status is StageStatus.ACTIVE:
                return n.stage
        return None

    @property
    def finished(self) -> bool:
        return self.finished_at is not None

    def check_shape(self) -> None:
        """Raise if the strip is not complete* (active)? pending*."""
        statuses = [n.status for n in self.nodes]
        i = 0
        while i < len(statuses) and statuses[i] is StageStatus.COMPLETE:
            i += 1
        if i < len(statuses) and statuses[i] is StageStatus.ACTIVE:
            i += 1
        for s in statuses[i:]:
            if s is not StageStatus.PENDING:
                raise EngineError(f"illegal stage pattern {[x.value for x in statuses]}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "scenario_id": self.scenario_id,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "nodes": [n.to_dict() for n in self.nodes],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ConversationGraph":
        return cls(
            session_id=str(d["session_id"]),
            scenario_id=str(d["scenario_id"]),
            nodes=[StageNode.from_dict(n) for n in d["nodes"]],
            created_at=float(d.get("created_at", 0.0)),
            finished_at=d.get("finished_at"),
        )


@dataclass
class EngineConfig:
    realtime_advice_interval_s: float = 30.0  # advice cadence, seconds
    profile_update_turns: int = 5  # extraction cadence, utterances


@dataclass
class SessionClock:
    """Monotone session-relative clock plus trigger bookkeeping."""

    now: float = 0.0
    last_realtime_advice_at: float | None = None
    utterances_seen: int = 0


class SessionEngine:
    """State machine for one running session.

    Mutators return the effects they trigger; callers persist events and
    dispatch effects. `transcript_utterances` is the canonical utterance
    list (all speakers).
    """

    def __init__(
        self,
        session_id: str,
        scenario: Scenario,
        *,
        at: float = 0.0,
        config: EngineConfig | None = None,
        profile: Any = None,
    ):
        self.config = config or EngineConfig()
        self.scenario = scenario
        self.profile = profile  # read-only context for advice prompts
        self.graph = ConversationGraph.fresh(session_id, scenario.id, at=at)
        self.clock = SessionClock(now=at)
        self.transcript_utterances: list[Utterance] = []

    # -- constructors -------------------------------------------------------

    @classmethod
    def start(
        cls,
        session_id: str,
        scenario: Scenario,
        *,
        at: float = 0.0,
        config: EngineConfig | None = None,
        profile: Any = None,
    ) -> tuple["SessionEngine", list[Effect]]:
        """New session on S1. Emits the S1 phase-advice request."""
        engine = cls(session_id, scenario, at=at, config=config, profile=profile)
        return engine, [Effect(EffectKind.PHASE_ADVICE_DUE, StageId.S1)]

    # -- queries -------------------------------------------------------------

    @property
    def session_id(self) -> str:
        return self.graph.session_id

    @property
    def finished(self) -> bool:
        return self.graph.finished

    def active_stage(self) -> StageId | None:
        return self.graph.active_stage()

    def stage_utterances(self, stage: StageId) -> list[Utterance]:
        return [u for u in self.transcript_utterances if u.stage is stage]

    def _require_running(self) -> StageId:
        if self.graph.finished:
            raise ClosedSessionError(f"session {self.session_id} is finished")
        active = self.graph.active_stage()
        if active is None:  # complete* with no active: only possible when finished
            raise ClosedSessionError(f"session {self.session_id} has no active stage")
        return active

    # -- mutators ------------------------------------------------------------

    def ingest_utterance(self, u: Utterance) -> list[Effect]:
        """Append one utterance. Triggers reassessment for parent/child talk
        and profile extraction every config.profile_update_turns utterances."""
        active = self._require_running()
        if u.turn_index != len(self.transcript_utterances):
            raise SequencingError(
                f"expected turn_index {len(self.transcript_utterances)}, got {u.turn_index}"
            )
        if u.stage is not active:
            raise SequencingError(f"utterance for stage {u.stage.value} while {active.value} is active")
        if self.transcript_utterances and u.t_start < self.transcript_utterances[-1].t_end:
            raise ClockError(
                f"utterance starts at {u.t_start} before previous end "
                f"{self.transcript_utterances[-1].t_end}"
            )
        self.transcript_utterances.append(u)
        self.clock.now = max(self.clock.now, u.t_end)
        self.clock.utterances_seen += 1
        node = self.graph.node(active)
        node.turn_span = (
            (u.turn_index, u.turn_index)
            if node.turn_span is None
            else (node.turn_span[0], u.turn_index)
        )
        effects: list[Effect] = []
        if u.speaker is not Speaker.AGENT:
            effects.append(Effect(EffectKind.COMPLETION_REASSESSMENT_DUE, active))
        if self.clock.utterances_seen % self.config.profile_update_turns == 0:
            effects.append(Effect(EffectKind.PROFILE_EXTRACTION_DUE, active))
        return effects

    def advance_stage(self, at: float | None = None) -> list[Effect]:
        """Explicit parent-driven advance. Completing S5 finishes the session
        and emits reward+report; otherwise emits phase advice for the next
        stage."""
        active = self._require_running()
        t = self.clock.now if at is None else at
        if t < self.clock.now:
            raise ClockError(f"advance at {t} before clock {self.clock.now}")
        self.clock.now = t
        node = self.graph.node(active)
        node.status = StageStatus.COMPLETE
        node.exited_at = t
        nxt = active.next()
        if nxt is None:
            self.graph.finished_at = t
            return [Effect(EffectKind.REWARD_DUE), Effect(EffectKind.REPORT_DUE)]
        nxt_node = self.graph.node(nxt)
        nxt_node.status = StageStatus.ACTIVE
        nxt_node.entered_at = t
        return [Effect(EffectKind.PHASE_ADVICE_DUE, nxt)]

    def tick(self, now: float) -> list[Effect]:
        """Clock heartbeat. Realtime advice fires when none was ever produced
        or at least the configured interval elapsed since the last one."""
        active = self._require_running()
        if now < self.clock.now:
            raise ClockError(f"tick at {now} before clock {self.clock.now}")
        self.clock.now = now
        last = self.clock.last_realtime_advice_at
        interval = self.config.realtime_advice_interval_s
        if last is None or now - last >= interval:
            self.clock.last_realtime_advice_at = now
            return [Effect(EffectKind.REALTIME_ADVICE_DUE, active)]
        return []

    def record_completion(self, stage: StageId, level: float) -> None:
        if not 0.0 <= level <= 1.0:
            raise ValueError(f"completion level {level} outside [0, 1]")
        self.graph.node(stage).completion_level = level


# --- assessment op ----------------------------------------------------------

#: Scores one stage from its goal and utterances; raises on model failure.
ScoreFn = Callable[[StageId, str, Sequence[Utterance]], float]


@dataclass(frozen=True)
class AssessmentOutcome:
    stage: StageId
    level: float
    degraded: bool = False

    @property
    def effects(self) -> list[Effect]:
        return [Effect(EffectKind.ASSESSMENT_DEGRADED, self.stage)] if self.degraded else []


def assess_stage_completion(session: SessionEngine, score: ScoreFn) -> AssessmentOutcome:
    """Re-score the active stage over all its utterances so far.

    No utterances -> 0.0 without a model call. A scoring failure keeps the
    node's previous level and reports degraded instead of raising.
    """
    active = session._require_running()
    window = session.stage_utterances(active)
    node = session.graph.node(active)
    if not window:
        node.completion_level = 0.0
        return AssessmentOutcome(stage=active, level=0.0)
    try:
        level = score(active, active.goal, window)
    except Exception:  # noqa: BLE001 - degrade on any scoring failure
        return AssessmentOutcome(stage=active, level=node.completion_level, degraded=True)
    session.record_completion(active, level)
    return AssessmentOutcome(stage=active, level=level)


# --- registry ----------------------------------------------------------------


class SessionRegistry:
    """Holds live engines and resolves scenario ids. Single-writer."""

    def __init__(self, catalog: Sequence[Scenario], config: EngineConfig | None = None):
        self.catalog: dict[str, Scenario] = {s.id: s for s in catalog}
        self.config = config or EngineConfig()
        self.sessions: dict[str, SessionEngine] = {}

    def start_session(
        self,
        session_id: str,
        scenario_id: str,
        *,
        at: float = 0.0,
        profile: Any = None,
    ) -> tuple[SessionEngine, list[Effect]]:
        if session_id in self.sessions:
            raise ConflictError(f"session {session_id!r} already started")
        scenario = self.catalog.get(scenario_id)
        if scenario is None:
            raise NotFoundError(f"unknown scenario {scenario_id!r}")
        engine, effects = SessionEngine.start(
            session_id, scenario, at=at, config=self.config, profile=profile
        )
        self.sessions[session_id] = engine
        return engine, effects

    def get(self, session_id: str) -> SessionEngine:
        engine = self.sessions.get(session_id)
        if engine is None:
            raise NotFoundError(f"unknown session {session_id!r}")
        return engine
