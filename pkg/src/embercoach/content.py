"""Coaching content: advice, the in-scene agent voice, images, rewards, reports.

Everything here is generated through the gateway from prompt templates that
live under data/prompts, with deterministic static fallbacks when the model
side fails. No template text is hardcoded in this module.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

from .domain import STAGE_GOALS, STAGE_ORDER, Scenario, StageId, Utterance
from .engine import ConversationGraph
from .gateway import (
    AdviceSchema,
    Gateway,
    ModelRequest,
    PromptPart,
    ReportSchema,
    ScoreSchema,
    Task,
)
from .modeling import ChildEmotionalProfile

log = logging.getLogger(__name__)


class AdviceKind(str, Enum):
    PHASE = "phase"  # once per stage entry, reflective
    REALTIME = "realtime"  # on the heartbeat, rapid


class AdviceCategory(str, Enum):
    OPEN_ENDED_QUESTIONING = "open-ended-questioning"
    SCENARIO_SIMULATION = "scenario-simulation"
    CONCRETE_SUGGESTIONS = "concrete-suggestions"
    POSITIVE_ENCOURAGEMENT = "positive-encouragement"
    EMPATHY_AND_ACCEPTANCE = "empathy-and-acceptance"
    COLLABORATIVE_PROBLEM_SOLVING = "collaborative-problem-solving"


CATEGORY_VALUES = frozenset(c.value for c in AdviceCategory)

#: Loose labels a model might answer with, coerced onto the closed set.
CATEGORY_ALIASES: dict[str, str] = {
    "open ended questioning": AdviceCategory.OPEN_ENDED_QUESTIONING.value,
    "open-ended questions": AdviceCategory.OPEN_ENDED_QUESTIONING.value,
    "questioning": AdviceCategory.OPEN_ENDED_QUESTIONING.value,
    "scenario simulation": AdviceCategory.SCENARIO_SIMULATION.value,
    "role play": AdviceCategory.SCENARIO_SIMULATION.value,
    "concrete suggestions": AdviceCategory.CONCRETE_SUGGESTIONS.value,
    "suggestion": AdviceCategory.CONCRETE_SUGGESTIONS.value,
    "positive encouragement": AdviceCategory.POSITIVE_ENCOURAGEMENT.value,
    "encouragement": AdviceCategory.POSITIVE_ENCOURAGEMENT.value,
    "empathy and acceptance": AdviceCategory.EMPATHY_AND_ACCEPTANCE.value,
    "empathy": AdviceCategory.EMPATHY_AND_ACCEPTANCE.value,
    "collaborative problem solving": AdviceCategory.COLLABORATIVE_PROBLEM_SOLVING.value,
    "problem solving": AdviceCategory.COLLABORATIVE_PROBLEM_SOLVING.value,
}


def advice_schema() -> AdviceSchema:
    return AdviceSchema(categories=CATEGORY_VALUES, aliases=CATEGORY_ALIASES)


@dataclass
class AdviceItem:
    id: str
    kind: AdviceKind
    category: AdviceCategory
    text: str
    stage: StageId
    created_at: float
    acknowledged: bool = False
    degraded: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "category": self.category.value,
            "text": self.text,
            "stage": self.stage.value,
            "created_at": self.created_at,
            "acknowledged": self.acknowledged,
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AdviceItem":
        return cls(
            id=str(d["id"]),
            kind=AdviceKind(d["kind"]),
            category=AdviceCategory(d["category"]),
            text=str(d["text"]),
            stage=StageId(d["stage"]),
            created_at=float(d["created_at"]),
            acknowledged=bool(d.get("acknowledged", False)),
            degraded=bool(d.get("degraded", False)),
        )


# --- rewards -----------------------------------------------------------------


class RewardKind(str, Enum):
    MEDAL = "medal"
    STARS = "stars"


MEDAL_THRESHOLD = 0.8  # mean stage completion at or above this earns a medal


@dataclass
class Reward:
    session_id: str
    kind: RewardKind
    count: int
    caption: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "kind": self.kind.value,
            "count": self.count,
            "caption": self.caption,
        }


def reward_shape(mean_completion: float) -> tuple[RewardKind, int]:
    """Medal at mean >= 0.8, else 1..5 stars (half-up rounding, floor 1)."""
    if mean_completion >= MEDAL_THRESHOLD:
        return RewardKind.MEDAL, 1
    stars = max(1, int(5.0 * mean_completion + 0.5))
    return RewardKind.STARS, stars


# --- report --------------------------------------------------------------------


@dataclass
class StageReview:
    score: float
    review: str

    def to_dict(self) -> dict[str, Any]:
        return {"score": self.score, "review": self.review}


@dataclass
class Highlight:
    turn_index: int
    excerpt: str
    comment: str

    def to_dict(self) -> dict[str, Any]:
        return {"turn_index": self.turn_index, "excerpt": self.excerpt, "comment": self.comment}


@dataclass
class FeedbackReport:
    session_id: str
    generated_at: float
    per_stage: dict[StageId, StageReview]
    highlights: list[Highlight] = field(default_factory=list)
    suggestions: list[str] = field(default_factory=list)
    badges_awarded: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "generated_at": self.generated_at,
            "per_stage": {s.value: r.to_dict() for s, r in self.per_stage.items()},
            "highlights": [h.to_dict() for h in self.highlights],
            "suggestions": list(self.suggestions),
            "badges_awarded": list(self.badges_awarded),
            "flags": list(self.flags),
        }


# --- badges ---------------------------------------------------------------------


@dataclass(frozen=True)
class Badge:
    id: str
    name: str
    criterion: dict[str, Any]


@dataclass
class SessionSummary:
    """What badge criteria may look at: one finished session's scores."""

    session_id: str
    finished_at: float
    stage_scores: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "finished_at": self.finished_at,
            "stage_scores": dict(self.stage_scores),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionSummary":
        return cls(
            session_id=str(d["session_id"]),
            finished_at=float(d["finished_at"]),
            stage_scores={str(k): float(v) for k, v in d.get("stage_scores", {}).items()},
        )


@dataclass
class BadgeHistory:
    awarded: dict[str, str] = field(default_factory=dict)  # badge id -> session id
    sessions: list[SessionSummary] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "awarded": dict(self.awarded),
            "sessions": [s.to_dict() for s in self.sessions],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BadgeHistory":
        return cls(
            awarded={str(k): str(v) for k, v in d.get("awarded", {}).items()},
            sessions=[SessionSummary.from_dict(s) for s in d.get("sessions", [])],
        )


_CRITERION_KINDS = ("sessions-completed", "stage-score", "mean-score")


def load_badge_catalog(path: str | Path | None = None) -> list[Badge]:
    p = Path(path) if path else Path(__file__).parent / "data" / "badges.json"
    doc = json.loads(p.read_text(encoding="utf-8"))
    badges: list[Badge] = []
    seen: set[str] = set()
    for rec in doc["badges"]:
        badge = Badge(id=str(rec["id"]), name=str(rec["name"]), criterion=dict(rec["criterion"]))
        if badge.id in seen:
            raise ValueError(f"duplicate badge id {badge.id!r}")
        if badge.criterion.get("kind") not in _CRITERION_KINDS:
            raise ValueError(f"badge {badge.id!r}: unknown criterion kind")
        seen.add(badge.id)
        badges.append(badge)
    return badges


def criterion_met(criterion: dict[str, Any], history: BadgeHistory) -> bool:
    kind = criterion["kind"]
    if kind == "sessions-completed":
        return len(history.sessions) >= int(criterion["count"])
    if kind == "stage-score":
        stage = str(criterion["stage"])
        min_score = float(criterion["min_score"])
        times = int(criterion.get("times", 1))
        hits = sum(1 for s in history.sessions if s.stage_scores.get(stage, 0.0) >= min_score)
        return hits >= times
    if kind == "mean-score":
        min_score = float(criterion["min_score"])
        times = int(criterion.get("times", 1))
        hits = 0
        for s in history.sessions:
            if s.stage_scores and sum(s.stage_scores.values()) / len(s.stage_scores) >= min_score:
                hits += 1
        return hits >= times
    return False


def award_badges(catalog: Sequence[Badge], history: BadgeHistory, session_id: str) -> list[str]:
    """Evaluate all criteria against history; newly met badges are recorded
    into history.awarded (so re-evaluating the same history is a no-op) and
    returned in catalog order."""
    earned: list[str] = []
    for badge in catalog:
        if badge.id in history.awarded:
            continue
        if criterion_met(badge.criterion, history):
            history.awarded[badge.id] = session_id
            earned.append(badge.id)
    return earned


# --- images ----------------------------------------------------------------------


@dataclass
class ImageHandle:
    id: str
    status: str  # "ready" | "failed"
    prompt: str
    data: bytes | None = None
    reason: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "status": self.status,
            "prompt": self.prompt,
            "data_b64": base64.b64encode(self.data).decode("ascii") if self.data else None,
            "reason": self.reason,
        }


#: Rewrites conversation context for a child-safe image prompt. The default
#: keeps words that also appear in the scenario text or a small neutral set.
ContentFilter = Callable[[str, Scenario], str]

_NEUTRAL_WORDS = frozenset(
    "a an the and or of in on at to with for is was be feel feels felt happy sad scared "
    "brave calm child kid parent friend school stage play sing look watch big small".split()
)


def default_content_filter(context: str, scenario: Scenario) -> str:
    allowed = set(_NEUTRAL_WORDS)
    for chunk in (scenario.title, scenario.description, " ".join(scenario.common_emotions)):
        allowed.update(w.strip(".,!?;:\"'").casefold() for w in chunk.split())
    kept = [w for w in context.split() if w.strip(".,!?;:\"'").casefold() in allowed]
    return " ".join(kept)


# --- prompt templates ---------------------------------------------------------------


class PromptLibrary:
    """Loads named templates from a directory of .txt files once."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root else Path(__file__).parent / "data" / "prompts"
        self._cache: dict[str, str] = {}

    def get(self, name: str) -> str:
        if name not in self._cache:
            self._cache[name] = (self.root / f"{name}.txt").read_text(encoding="utf-8")
        return self._cache[name]


def load_fallback_advice(path: str | Path | None = None) -> dict[StageId, dict[str, str]]:
    """Static per-stage advice used when generation fails."""
    p = Path(path) if path else Path(__file__).parent / "data" / "fallback_advice.json"
    doc = json.loads(p.read_text(encoding="utf-8"))
    table: dict[StageId, dict[str, str]] = {}
    for key, rec in doc["stages"].items():
        stage = StageId(key)
        if rec["category"] not in CATEGORY_VALUES:
            raise ValueError(f"fallback advice for {key}: bad category {rec['category']!r}")
        table[stage] = {"category": rec["category"], "text": rec["text"]}
    missing = set(STAGE_ORDER) - set(table)
    if missing:
        raise ValueError(f"fallback advice table misses stages {sorted(s.value for s in missing)}")
    return table


# --- generator -------------------------------------------------------------------------


def render_turns(window: Sequence[Utterance]) -> str:
    return "\n".join(f"{u.speaker.value}: {u.text}" for u in window)


def render_profile(profile: ChildEmotionalProfile | None) -> str:
    if profile is None or not profile.entries:
        return "(no profile on record)"
    lines = [f"- [{e.dimension.value}/{e.facet.value}] {e.statement}" for e in profile.entries]
    return "\n".join(lines)


class ContentGenerator:
    """All model-produced content for sessions, with deterministic fallbacks."""

    def __init__(
        self,
        gateway: Gateway,
        *,
        prompts: PromptLibrary | None = None,
        fallback_advice: dict[StageId, dict[str, str]] | None = None,
        content_filter: ContentFilter = default_content_filter,
    ):
        self.gateway = gateway
        self.prompts = prompts or PromptLibrary()
        self.fallback_advice = fallback_advice or load_fallback_advice()
        self.content_filter = content_filter

    # -- advice --

    def _advice(
        self,
        kind: AdviceKind,
        template: str,
        stage: StageId,
        *,
        item_id: str,
        created_at: float,
        request_id: str,
        **slots: str,
    ) -> AdviceItem:
        prompt = self.prompts.get(template).format(stage=stage.value, goal=stage.goal, **slots)
        resp = self.gateway.invoke(
            ModelRequest(
                task=Task.CHAT,
                parts=(PromptPart("user", prompt),),
                schema=advice_schema(),
                request_id=request_id,
            )
        )
        if resp.ok:
            return AdviceItem(
                id=item_id,
                kind=kind,
                category=AdviceCategory(resp.payload["category"]),
                text=resp.payload["text"],
                stage=stage,
                created_at=created_at,
            )
        log.warning("%s advice degraded for %s: %s", kind.value, stage.value, resp.reason)
        fb = self.fallback_advice[stage]
        return AdviceItem(
            id=item_id,
            kind=kind,
            category=AdviceCategory(fb["category"]),
            text=fb["text"],
            stage=stage,
            created_at=created_at,
            degraded=True,
        )

    def phase_advice(
        self,
        stage: StageId,
        scenario: Scenario,
        profile: ChildEmotionalProfile | None,
        window: Sequence[Utterance],
        *,
        item_id: str,
        created_at: float,
        request_id: str = "",
    ) -> AdviceItem:
        """Reflective stage-entry advice; the prompt carries the scenario,
        the child profile, and the conversation so far."""
        return self._advice(
            AdviceKind.PHASE,
            "phase_advice",
            stage,
            item_id=item_id,
            created_at=created_at,
            request_id=request_id,
            scenario_title=scenario.title,
            scenario_description=scenario.description,
            profile=render_profile(profile),
            recent_turns=render_turns(window) or "(no conversation yet)",
        )

    def realtime_advice(
        self,
        stage: StageId,
        scenario: Scenario,
        window: Sequence[Utterance],
        *,
        item_id: str,
        created_at: float,
        request_id: str = "",
    ) -> AdviceItem:
        """Rapid advice from the last few turns."""
        return self._advice(
            AdviceKind.REALTIME,
            "realtime_advice",
            stage,
            item_id=item_id,
            created_at=created_at,
            request_id=request_id,
            scenario_title=scenario.title,
            recent_turns=render_turns(window) or "(no conversation yet)",
        )

    # -- agent voice --

    def agent_reply(
        self,
        scenario: Scenario,
        stage: StageId,
        window: Sequence[Utterance],
        *,
        request_id: str = "",
    ) -> tuple[str, bytes | None]:
        """Text (plus synthesized audio when available) for the in-scene
        agent character. Raises RuntimeError if the reply cannot be produced;
        the caller answers an error message and the session continues."""
        prompt = self.prompts.get("agent_reply").format(
            scenario_title=scenario.title,
            scenario_description=scenario.description,
            stage=stage.value,
            goal=stage.goal,
            recent_turns=render_turns(window) or "(silence so far)",
        )
        resp = self.gateway.invoke(
            ModelRequest(
                task=Task.CHAT, parts=(PromptPart("user", prompt),), request_id=request_id
            )
        )
        if not resp.ok or not isinstance(resp.payload, str) or not resp.payload.strip():
            raise RuntimeError(f"agent reply failed: {resp.reason or 'empty payload'}")
        text = resp.payload.strip()
        audio_resp = self.gateway.invoke(
            ModelRequest(task=Task.SYNTHESIZE, parts=(PromptPart("user", text),))
        )
        audio = audio_resp.payload if audio_resp.ok and isinstance(audio_resp.payload, bytes) else None
        return text, audio

    # -- scoring --

    def score_stage(self, stage: StageId, goal: str, window: Sequence[Utterance]) -> float:
        """Completion score for a stage window. Raises on gateway failure so
        the engine-side assessment op can degrade explicitly."""
        prompt = self.prompts.get("stage_score").format(
            stage=stage.value, goal=goal, turns=render_turns(window)
        )
        resp = self.gateway.invoke(
            ModelRequest(
                task=Task.SCORE, parts=(PromptPart("user", prompt),), schema=ScoreSchema()
            )
        )
        if not resp.ok:
            raise RuntimeError(f"stage scoring failed: {resp.reason}")
        return float(resp.payload)

    # -- images --

    def scene_image(
        self,
        scenario: Scenario,
        window: Sequence[Utterance],
        *,
        image_id: str,
        request_id: str = "",
    ) -> ImageHandle:
        """Illustration for the scenario; conversation context passes through
        the content filter, the scenario description goes in verbatim."""
        context = self.content_filter(render_turns(window), scenario)
        prompt = self.prompts.get("scene_image").format(
            scenario_title=scenario.title,
            scenario_description=scenario.description,
            context=context,
        )
        resp = self.gateway.invoke(
            ModelRequest(
                task=Task.IMAGINE, parts=(PromptPart("user", prompt),), request_id=request_id
            )
        )
        if resp.ok and isinstance(resp.payload, bytes):
            return ImageHandle(id=image_id, status="ready", prompt=prompt, data=resp.payload)
        return ImageHandle(
            id=image_id, status="failed", prompt=prompt, reason=resp.reason or "no image payload"
        )

    # -- reward --

    def reward(self, graph: ConversationGraph, *, request_id: str = "") -> Reward:
        """Completion reward for a finished session."""
        if not graph.finished:
            raise ValueError("reward requires a finished session")
        mean = sum(n.completion_level for n in graph.nodes) / len(graph.nodes)
        kind, count = reward_shape(mean)
        prompt = self.prompts.get("reward_caption").format(
            kind=kind.value, count=count, scenario_id=graph.scenario_id
        )
        resp = self.gateway.invoke(
            ModelRequest(task=Task.CHAT, parts=(PromptPart("user", prompt),), request_id=request_id)
        )
        if resp.ok and isinstance(resp.payload, str) and resp.payload.strip():
            caption = resp.payload.strip()
        else:
            noun = "medal" if kind is RewardKind.MEDAL else ("star" if count == 1 else "stars")
            caption = f"You earned {count} {noun} for talking about your feelings today!"
        return Reward(session_id=graph.session_id, kind=kind, count=count, caption=caption)

    # -- report --

    def feedback_report(
        self,
        graph: ConversationGraph,
        utterances: Sequence[Utterance],
        profile: ChildEmotionalProfile | None,
        *,
        badge_catalog: Sequence[Badge],
        history: BadgeHistory,
        request_id: str = "",
    ) -> FeedbackReport:
        """End-of-session review for the parent.

        The model path validates highlight citations against real turn
        indexes (bad ones are stripped and flagged). The degraded path copies
        the graph's completion levels with template reviews. Either way the
        session lands in badge history exactly once and newly earned badges
        ride along."""
        if not graph.finished:
            raise ValueError("report requires a finished session")
        prompt = self.prompts.get("report").format(
            scenario_id=graph.scenario_id,
            goals="\n".join(f"{s.value}: {STAGE_GOALS[s]}" for s in STAGE_ORDER),
            transcript=render_turns(utterances) or "(no conversation)",
            profile=render_profile(profile),
        )
        resp = self.gateway.invoke(
            ModelRequest(
                task=Task.EXTRACT,
                parts=(PromptPart("user", prompt),),
                schema=ReportSchema(stage_keys=tuple(s.value for s in STAGE_ORDER)),
                request_id=request_id,
            )
        )
        flags: list[str] = []
        highlights: list[Highlight] = []
        suggestions: list[str] = []
        per_stage: dict[StageId, StageReview] = {}
        if resp.ok:
            by_index = {u.turn_index: u for u in utterances}
            for s in STAGE_ORDER:
                cell = resp.payload["per_stage"][s.value]
                per_stage[s] = StageReview(score=cell["score"], review=cell["review"])
            for h in resp.payload["highlights"]:
                u = by_index.get(h["turn_index"])
                if u is None:
                    log.warning("report cited missing turn %s; stripped", h["turn_index"])
                    if "highlight-dropped" not in flags:
                        flags.append("highlight-dropped")
                    continue
                highlights.append(
                    Highlight(turn_index=u.turn_index, excerpt=u.text, comment=h["comment"])
                )
            suggestions = list(resp.payload["suggestions"])
        else:
            log.warning("report generation degraded: %s", resp.reason)
            flags.append("degraded")
            for node in graph.nodes:
                pct = round(node.completion_level * 100)
                per_stage[node.stage] = StageReview(
                    score=node.completion_level,
                    review=f"Stage {node.stage.value} reached {pct}% of its goal.",
                )
            suggestions = [
                "Pick one moment from today's talk and revisit it together tomorrow."
            ]
        summary = SessionSummary(
            session_id=graph.session_id,
            finished_at=graph.finished_at or 0.0,
            stage_scores={n.stage.value: n.completion_level for n in graph.nodes},
        )
        if all(s.session_id != summary.session_id for s in history.sessions):
            history.sessions.append(summary)
        award_badges(badge_catalog, history, graph.session_id)
        # Read the awards back out of the history rather than using the call's
        # return value: if a crash persisted the history but not the report,
        # the regenerated report must still list this session's badges.
        badges = [
            b.id for b in badge_catalog if history.awarded.get(b.id) == graph.session_id
        ]
        return FeedbackReport(
            session_id=graph.session_id,
            generated_at=graph.finished_at or 0.0,
            per_stage=per_stage,
            highlights=highlights,
            suggestions=suggestions,
            badges_awarded=badges,
            flags=flags,
        )
