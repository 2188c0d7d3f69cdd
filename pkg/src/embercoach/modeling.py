"""Child emotional profile: dual-source entries, merging, comparison, interview.

A profile is an append/merge-only list of facet-tagged statements. Each
entry keeps its source (parent interview vs conversation analysis); the two
sources are never merged with each other, only compared.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

from .gateway import (
    DecisionSchema,
    EntryListSchema,
    Gateway,
    ModelRequest,
    PromptPart,
    Task,
)

log = logging.getLogger(__name__)

SIMILARITY_THRESHOLD = 0.8  # token-set Jaccard at or above this merges/aligns


class ProfileDimension(str, Enum):
    UNDERSTANDING = "understanding"
    EXPRESSION = "expression"
    REGULATION = "regulation"


class Facet(str, Enum):
    # understanding
    EMOTION_RECOGNITION = "emotion-recognition"
    EMOTION_ELICITORS = "emotion-elicitors"
    EMOTION_BELIEF = "emotion-belief"
    MEMORY_IMPACT = "memory-impact"
    MIXED_EMOTIONS = "mixed-emotions"
    # expression
    EMOTIONAL_EXPRESSION = "emotional-expression"
    EMOTIONAL_MASKING = "emotional-masking"
    # regulation
    EMOTION_REGULATION = "emotion-regulation"
    MORAL_EMOTIONS = "moral-emotions"


DIMENSION_FACETS: dict[ProfileDimension, frozenset[Facet]] = {
    ProfileDimension.UNDERSTANDING: frozenset(
        {
            Facet.EMOTION_RECOGNITION,
            Facet.EMOTION_ELICITORS,
            Facet.EMOTION_BELIEF,
            Facet.MEMORY_IMPACT,
            Facet.MIXED_EMOTIONS,
        }
    ),
    ProfileDimension.EXPRESSION: frozenset(
        {Facet.EMOTIONAL_EXPRESSION, Facet.EMOTIONAL_MASKING}
    ),
    ProfileDimension.REGULATION: frozenset(
        {Facet.EMOTION_REGULATION, Facet.MORAL_EMOTIONS}
    ),
}

FACET_DIMENSION: dict[Facet, ProfileDimension] = {
    f: d for d, facets in DIMENSION_FACETS.items() for f in facets
}


class EntrySource(str, Enum):
    PARENT_INTERVIEW = "parent-interview"
    CONVERSATION_ANALYSIS = "conversation-analysis"


@dataclass
class ProfileEntry:
    id: str
    dimension: ProfileDimension
    facet: Facet
    statement: str
    source: EntrySource
    evidence: list[str]
    created_at: float
    merged_count: int = 1

    def __post_init__(self) -> None:
        if self.facet not in DIMENSION_FACETS[self.dimension]:
            raise ValueError(
                f"facet {self.facet.value} does not belong to dimension {self.dimension.value}"
            )
        if not self.statement.strip():
            raise ValueError("statement must be non-empty")
        if not self.evidence:
            raise ValueError("evidence must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "dimension": self.dimension.value,
            "facet": self.facet.value,
            "statement": self.statement,
            "source": self.source.value,
            "evidence": list(self.evidence),
            "created_at": self.created_at,
            "merged_count": self.merged_count,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProfileEntry":
        return cls(
            id=str(d["id"]),
            dimension=ProfileDimension(d["dimension"]),
            facet=Facet(d["facet"]),
            statement=str(d["statement"]),
            source=EntrySource(d["source"]),
            evidence=[str(e) for e in d["evidence"]],
            created_at=float(d["created_at"]),
            merged_count=int(d.get("merged_count", 1)),
        )


@dataclass
class DimensionComparison:
    aligned: list[list[str]] = field(default_factory=list)  # id groups spanning both sources
    parent_only: list[str] = field(default_factory=list)
    ai_only: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "aligned": [list(g) for g in self.aligned],
            "parent_only": list(self.parent_only),
            "ai_only": list(self.ai_only),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DimensionComparison":
        return cls(
            aligned=[list(g) for g in d.get("aligned", [])],
            parent_only=list(d.get("parent_only", [])),
            ai_only=list(d.get("ai_only", [])),
        )


@dataclass
class ChildEmotionalProfile:
    child_id: str
    entries: list[ProfileEntry] = field(default_factory=list)
    comparison: dict[ProfileDimension, DimensionComparison] = field(default_factory=dict)
    version: int = 0

    def entries_for(self, dimension: ProfileDimension) -> list[ProfileEntry]:
        return [e for e in self.entries if e.dimension is dimension]

    def to_dict(self) -> dict[str, Any]:
        return {
            "child_id": self.child_id,
            "version": self.version,
            "entries": [e.to_dict() for e in self.entries],
            "comparison": {d.value: c.to_dict() for d, c in self.comparison.items()},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChildEmotionalProfile":
        return cls(
            child_id=str(d["child_id"]),
            entries=[ProfileEntry.from_dict(e) for e in d.get("entries", [])],
            comparison={
                ProfileDimension(k): DimensionComparison.from_dict(v)
                for k, v in d.get("comparison", {}).items()
            },
            version=int(d.get("version", 0)),
        )


# --- statement similarity -----------------------------------------------


_TOKEN_RE = re.compile(r"[\w']+", re.UNICODE)


def normalize_statement(text: str) -> str:
    return " ".join(text.casefold().split())


def statement_tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.casefold()))


def statements_match(a: str, b: str, *, threshold: float = SIMILARITY_THRESHOLD) -> bool:
    """Exact match after normalization always matches; otherwise token-set
    Jaccard similarity at or above the threshold."""
    na, nb = normalize_statement(a), normalize_statement(b)
    if na == nb:
        return True
    ta, tb = statement_tokens(a), statement_tokens(b)
    union = ta | tb
    if not union:
        return False
    return len(ta & tb) / len(union) >= threshold


# --- integration -----------------------------------------------------------


def integrate_entries(
    profile: ChildEmotionalProfile,
    new_entries: Sequence[ProfileEntry],
    *,
    threshold: float = SIMILARITY_THRESHOLD,
) -> ChildEmotionalProfile:
    """Fold new entries into the profile, merging near-duplicates.

    A new entry merges into the earliest existing entry with the same
    (dimension, facet, source) whose statement matches; merging unions
    evidence, bumps merged_count, and keeps the earliest created_at.
    Entries from different sources are never merged. The profile version
    bumps exactly once per call, even for an empty batch.
    """
    for e in new_entries:
        target = None
        for existing in profile.entries:
            if (
                existing.dimension is e.dimension
                and existing.facet is e.facet
                and existing.source is e.source
                and statements_match(existing.statement, e.statement, threshold=threshold)
            ):
                if target is None or existing.created_at < target.created_at:
                    target = existing
        if target is None:
            profile.entries.append(
                ProfileEntry(
                    id=e.id,
                    dimension=e.dimension,
                    facet=e.facet,
                    statement=e.statement,
                    source=e.source,
                    evidence=list(e.evidence),
                    created_at=e.created_at,
                    merged_count=e.merged_count,
                )
            )
        else:
            for ref in e.evidence:
                if ref not in target.evidence:
                    target.evidence.append(ref)
            target.merged_count += e.merged_count
            target.created_at = min(target.created_at, e.created_at)
    profile.version += 1
    return profile


# --- comparison -------------------------------------------------------------


def compare_sources(
    profile: ChildEmotionalProfile, *, threshold: float = SIMILARITY_THRESHOLD
) -> dict[ProfileDimension, DimensionComparison]:
    """Per-dimension view of where the two sources agree.

    Entries of the same dimension and facet whose statements match are
    connected; each connected component containing both sources becomes one
    aligned group, and single-source components land in parent_only /
    ai_only. Every entry id appears exactly once for its dimension. The
    result is also stored on profile.comparison.
    """
    result: dict[ProfileDimension, DimensionComparison] = {}
    for dimension in ProfileDimension:
        entries = profile.entries_for(dimension)
        parent = [i for i, e in enumerate(entries) if e.source is EntrySource.PARENT_INTERVIEW]
        ai = [i for i, e in enumerate(entries) if e.source is EntrySource.CONVERSATION_ANALYSIS]
        # union-find over entry positions
        root = list(range(len(entries)))

        def find(x: int) -> int:
            while root[x] != x:
                root[x] = root[root[x]]
                x = root[x]
            return x

        for pi in parent:
            for ai_i in ai:
                a, b = entries[pi], entries[ai_i]
                if a.facet is b.facet and statements_match(
                    a.statement, b.statement, threshold=threshold
                ):
                    root[find(pi)] = find(ai_i)
        groups: dict[int, list[int]] = {}
        for i in range(len(entries)):
            groups.setdefault(find(i), []).append(i)
        comparison = DimensionComparison()
        for members in groups.values():
            sources = {entries[i].source for i in members}
            ids = [entries[i].id for i in sorted(members)]
            if len(sources) == 2:
                comparison.aligned.append(ids)
            elif EntrySource.PARENT_INTERVIEW in sources:
                comparison.parent_only.extend(ids)
            else:
                comparison.ai_only.extend(ids)
        comparison.aligned.sort()
        comparison.parent_only.sort()
        comparison.ai_only.sort()
        result[dimension] = comparison
    profile.comparison = result
    return result


# --- extraction --------------------------------------------------------------


@dataclass
class ExtractionResult:
    entries: list[ProfileEntry]
    rejected: list[dict[str, str]] = field(default_factory=list)
    degraded: bool = False


class ProfileExtractor:
    """Turns raw text (conversation window or interview answer) into
    vocabulary-checked profile entries via the gateway."""

    def __init__(self, gateway: Gateway, prompt_template: str):
        self.gateway = gateway
        self.prompt_template = prompt_template

    def extract(
        self,
        source_text: str,
        source: EntrySource,
        *,
        evidence: Sequence[str],
        created_at: float,
        make_id: Callable[[], str],
        request_id: str = "",
    ) -> ExtractionResult:
        """Extract entries from source_text.

        Empty text yields an empty result without a model call. Entries whose
        facet/dimension pair falls outside the nine-facet vocabulary are
        logged and dropped; valid siblings survive. A gateway failure yields
        an empty, degraded result.
        """
        if not source_text.strip():
            return ExtractionResult(entries=[])
        if not evidence:
            raise ValueError("evidence references must be non-empty")
        prompt = self.prompt_template.format(source=source.value, text=source_text)
        resp = self.gateway.invoke(
            ModelRequest(
                task=Task.EXTRACT,
                parts=(PromptPart("user", prompt),),
                schema=EntryListSchema(),
                request_id=request_id,
            )
        )
        if not resp.ok:
            log.warning("profile extraction failed: %s", resp.reason)
            return ExtractionResult(entries=[], degraded=True)
        entries: list[ProfileEntry] = []
        rejected: list[dict[str, str]] = []
        for raw in resp.payload:
            try:
                facet = Facet(raw["facet"])
                dimension = ProfileDimension(raw["dimension"])
            except ValueError:
                log.warning("dropped profile entry with unknown vocabulary: %s", raw)
                rejected.append(raw)
                continue
            if facet not in DIMENSION_FACETS[dimension]:
                log.warning(
                    "dropped profile entry: facet %s not under dimension %s",
                    facet.value,
                    dimension.value,
                )
                rejected.append(raw)
                continue
            entries.append(
                ProfileEntry(
                    id=make_id(),
                    dimension=dimension,
                    facet=facet,
                    statement=raw["statement"],
                    source=source,
                    evidence=list(evidence),
                    created_at=created_at,
                )
            )
        return ExtractionResult(entries=entries, rejected=rejected)


# --- interview ----------------------------------------------------------------


@dataclass(frozen=True)
class InterviewQuestion:
    id: str
    facet: Facet
    text: str


@dataclass(frozen=True)
class InterviewPrompt:
    """What to ask next. followup_of is set when this probes deeper into a
    list question instead of advancing."""

    question_id: str
    facet: Facet
    text: str
    followup_of: str | None = None


@dataclass
class InterviewAnswer:
    question_id: str
    text: str
    followup_of: str | None = None


@dataclass
class InterviewState:
    questions: list[InterviewQuestion]
    cursor: int = 0  # index of the list question currently on the table
    followup_depth: int = 0
    answers: list[InterviewAnswer] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.questions)


@dataclass(frozen=True)
class InterviewDecision:
    action: str  # "probe" | "advance"
    question: str | None = None


#: Decides whether to probe deeper or move on, given the latest answer and
#: the list question under discussion. Raises on model failure.
DecideFn = Callable[[str, InterviewQuestion], InterviewDecision]


def next_interview_question(
    state: InterviewState,
    last_answer: str | None,
    decide: DecideFn,
    *,
    max_followups: int = 2,
) -> InterviewPrompt | None:
    """Advance the interview by one prompt; None means the interview is over.

    Fresh state asks the first list question. Otherwise the decision gate
    picks probe vs advance; probes are capped at max_followups per list
    question and a gate failure degrades to plain advancing.
    """
    if state.done:
        return None
    if not state.answers:
        q = state.questions[state.cursor]
        return InterviewPrompt(question_id=q.id, facet=q.facet, text=q.text)
    current = state.questions[state.cursor]
    try:
        decision = decide(last_answer or "", current)
    except Exception:  # noqa: BLE001 - gate failure degrades to structured mode
        log.warning("interview gate failed; advancing to the next list question")
        decision = InterviewDecision(action="advance")
    if decision.action == "probe" and state.followup_depth < max_followups:
        state.followup_depth += 1
        text = decision.question or f"Could you say a bit more? {current.text}"
        return InterviewPrompt(
            question_id=f"{current.id}.f{state.followup_depth}",
            facet=current.facet,
            text=text,
            followup_of=current.id,
        )
    state.cursor += 1
    state.followup_depth = 0
    if state.done:
        return None
    q = state.questions[state.cursor]
    return InterviewPrompt(question_id=q.id, facet=q.facet, text=q.text)


def record_answer(state: InterviewState, prompt: InterviewPrompt, text: str) -> InterviewAnswer:
    answer = InterviewAnswer(
        question_id=prompt.question_id, text=text, followup_of=prompt.followup_of
    )
    state.answers.append(answer)
    return answer


def gateway_decider(gateway: Gateway, prompt_template: str) -> DecideFn:
    """Build a DecideFn that routes through the gateway's extract task."""

    def decide(last_answer: str, question: InterviewQuestion) -> InterviewDecision:
        prompt = prompt_template.format(question=question.text, answer=last_answer)
        resp = gateway.invoke(
            ModelRequest(
                task=Task.EXTRACT,
                parts=(PromptPart("user", prompt),),
                schema=DecisionSchema(),
            )
        )
        if not resp.ok:
            raise RuntimeError(f"interview gate failed: {resp.reason}")
        return InterviewDecision(
            action=resp.payload["action"], question=resp.payload.get("question")
        )

    return decide


# --- question list -------------------------------------------------------------


def load_interview_questions(path: str | Path | None = None) -> list[InterviewQuestion]:
    """Load the fixed interview question list; every facet must be covered."""
    p = Path(path) if path else Path(__file__).parent / "data" / "interview_questions.json"
    doc = json.loads(p.read_text(encoding="utf-8"))
    questions: list[InterviewQuestion] = []
    seen_ids: set[str] = set()
    for rec in doc["questions"]:
        q = InterviewQuestion(id=str(rec["id"]), facet=Facet(rec["facet"]), text=str(rec["text"]))
        if q.id in seen_ids:
            raise ValueError(f"duplicate interview question id {q.id!r}")
        seen_ids.add(q.id)
        questions.append(q)
    covered = {q.facet for q in questions}
    missing = set(Facet) - covered
    if missing:
        raise ValueError(
            f"interview question list misses facets: {sorted(f.value for f in missing)}"
        )
    return questions
