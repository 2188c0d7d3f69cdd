"""Core vocabulary: scenarios, stages, speakers, utterances, transcripts.

Pure value types plus catalog load/validate helpers. Nothing here touches
the wall clock or any I/O beyond reading a catalog document; all times are
session-relative seconds carried in from the event log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any


class CatalogError(ValueError):
    """A scenario catalog document could not be parsed or validated."""


class ScenarioCategory(str, Enum):
    """Closed set of situation categories a scenario may belong to."""

    SEPARATION = "separation"
    PEER_CONFLICT = "peer-conflict"
    SOCIAL_SETBACKS = "social-setbacks"
    PHYSICAL_DISCOMFORT = "physical-discomfort"
    AUTONOMY_VIOLATION = "autonomy-violation"
    NEGATIVE_FEEDBACK = "negative-feedback"
    STRESSFUL_CHALLENGES = "stressful-challenges"


CATEGORY_VALUES = frozenset(c.value for c in ScenarioCategory)


class StageId(str, Enum):
    """The five coaching stages, in fixed order S1..S5."""

    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"
    S5 = "S5"

    @property
    def order(self) -> int:
        return int(self.value[1])

    @property
    def goal(self) -> str:
        return STAGE_GOALS[self]

    def next(self) -> "StageId | None":
        return None if self is StageId.S5 else StageId(f"S{self.order + 1}")


STAGE_ORDER: tuple[StageId, ...] = (
    StageId.S1,
    StageId.S2,
    StageId.S3,
    StageId.S4,
    StageId.S5,
)

STAGE_GOALS: dict[StageId, str] = {
    StageId.S1: "Help the child recall an experience or describe a virtual scenario",
    StageId.S2: "Help the child label emotions and reason",
    StageId.S3: "Express empathy to children",
    StageId.S4: "Help the child reflect on positive and negative emotions",
    StageId.S5: "Help the child set boundaries and find positive solutions",
}


class Speaker(str, Enum):
    PARENT = "parent"
    CHILD = "child"
    AGENT = "agent"


@dataclass(frozen=True)
class Scenario:
    """One coachable situation. `category` stays a raw string so documents
    with out-of-enum categories can be represented and then rejected by
    validate_scenario rather than blowing up at parse time."""

    id: str
    category: str
    title: str
    description: str
    common_emotions: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "title": self.title,
            "description": self.description,
            "common_emotions": list(self.common_emotions),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        return cls(
            id=str(d["id"]),
            category=str(d["category"]),
            title=str(d.get("title", "")),
            description=str(d.get("description", "")),
            common_emotions=tuple(str(e) for e in d.get("common_emotions", [])),
        )


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    failures: tuple[str, ...] = ()


def validate_scenario(scenario: Scenario) -> ValidationResult:
    """Check one scenario against its invariants.

    Failure labels are stable strings: "id non-empty",
    "category enumeration", "common_emotions non-empty".
    """
    failures: list[str] = []
    if not scenario.id:
        failures.append("id non-empty")
    if scenario.category not in CATEGORY_VALUES:
        failures.append("category enumeration")
    if not scenario.common_emotions:
        failures.append("common_emotions non-empty")
    return ValidationResult(ok=not failures, failures=tuple(failures))


@dataclass(frozen=True)
class Utterance:
    """One turn of talk. Times are session-relative seconds."""

    turn_index: int
    speaker: Speaker
    text: str
    t_start: float
    t_end: float
    stage: StageId

    def __post_init__(self) -> None:
        if self.turn_index < 0:
            raise ValueError(f"turn_index must be >= 0, got {self.turn_index}")
        if self.t_start > self.t_end:
            raise ValueError(
                f"utterance time window inverted: t_start={self.t_start} > t_end={self.t_end}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_index": self.turn_index,
            "speaker": self.speaker.value,
            "text": self.text,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "stage": self.stage.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Utterance":
        return cls(
            turn_index=int(d["turn_index"]),
            speaker=Speaker(d["speaker"]),
            text=str(d["text"]),
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            stage=StageId(d["stage"]),
        )


@dataclass
class Transcript:
    """Ordered utterances of one session plus the session end time."""

    session_id: str
    scenario_id: str
    utterances: list[Utterance] = field(default_factory=list)
    session_t_end: float = 0.0

    def validate(self) -> None:
        """Raise ValueError on any ordering violation."""
        prev_end = 0.0
        for i, u in enumerate(self.utterances):
            if u.turn_index != i:
                raise ValueError(f"turn_index gap at position {i}: got {u.turn_index}")
            if u.t_start < prev_end:
                raise ValueError(
                    f"utterance {i} starts at {u.t_start} before previous end {prev_end}"
                )
            if u.t_end > self.session_t_end:
                raise ValueError(
                    f"utterance {i} ends at {u.t_end} after session end {self.session_t_end}"
                )
            prev_end = u.t_end
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "scenario_id": self.scenario_id,
            "session_t_end": self.session_t_end,
            "utterances": [u.to_dict() for u in self.utterances],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transcript":
        return cls(
            session_id=str(d["session_id"]),
            scenario_id=str(d["scenario_id"]),
            utterances=[Utterance.from_dict(u) for u in d.get("utterances", [])],
            session_t_end=float(d.get("session_t_end", 0.0)),
        )


# --- catalog I/O ---------------------------------------------------------


def load_scenario_catalog(source: str | Path) -> list[Scenario]:
    """Load and validate a scenario catalog document.

    `source` is a filesystem path or a JSON string. The document is either a
    bare list of scenario records or {"scenarios": [...]}. Raises CatalogError
    with position/field detail on malformed input, and on any record that
    fails its invariants or reuses an id.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        p = Path(source)
        # Heuristic: treat anything that parses as an existing path as a path.
        try:
            is_file = p.is_file()
        except OSError:
            is_file = False
        text = p.read_text(encoding="utf-8") if is_file else source

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CatalogError(f"malformed catalog document: {e.msg} at line {e.lineno} column {e.colno}") from e

    if isinstance(doc, dict):
        records = doc.get("scenarios")
        if not isinstance(records, list):
            raise CatalogError('malformed catalog document: missing "scenarios" list')
    elif isinstance(doc, list):
        records = doc
    else:
        raise CatalogError("malformed catalog document: expected a list or an object")

    scenarios: list[Scenario] = []
    seen: set[str] = set()
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise CatalogError(f"scenario #{i}: expected an object")
        for key in ("id", "category", "common_emotions"):
            if key not in rec:
                raise CatalogError(f'scenario #{i}: missing field "{key}"')
        s = Scenario.from_dict(rec)
        if s.id in seen:
            raise CatalogError(f'duplicate scenario id "{s.id}"')
        seen.add(s.id)
        result = validate_scenario(s)
        if not result.ok:
            raise CatalogError(
                f'scenario "{s.id}" failed validation: {", ".join(result.failures)}'
            )
        scenarios.append(s)
    return scenarios


def serialize_scenario_catalog(scenarios: list[Scenario]) -> str:
    """Render a catalog back to its JSON document form (round-trips with load)."""
    doc = {"scenarios": [s.to_dict() for s in scenarios]}
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def seed_catalog_path() -> Path:
    """Path of the catalog that ships with the package."""
    return Path(__file__).parent / "data" / "seed_scenarios.json"


def load_seed_catalog() -> list[Scenario]:
    return load_scenario_catalog(seed_catalog_path())
