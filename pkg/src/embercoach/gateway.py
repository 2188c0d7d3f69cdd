"""Single boundary to generative-model capabilities.

Every model call in the system goes through Gateway.invoke with a typed
request. Providers are pluggable; the scripted MockProvider answers
deterministically offline and is what the whole test suite runs on. A
minimal OpenAI-compatible HTTP binding is included for live use and is
never exercised by tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Protocol, Sequence

log = logging.getLogger(__name__)


class Task(str, Enum):
    CHAT = "chat"
    EXTRACT = "extract"
    SCORE = "score"
    TRANSCRIBE = "transcribe"
    SYNTHESIZE = "synthesize"
    IMAGINE = "imagine"


class ResponseStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"
    TIMEOUT = "timeout"


class GatewayError(Exception):
    """Base for gateway-side failures."""


class ConfigurationError(GatewayError):
    """Bad or incomplete provider wiring; raised at startup, never mid-session."""


class SchemaViolation(GatewayError):
    """Provider payload does not satisfy the request's output schema."""


class ProviderError(GatewayError):
    """The provider could not produce a payload."""


class ProviderTimeout(ProviderError):
    """The provider gave up past its deadline."""


class SequencingError(GatewayError):
    """Audio chunks arrived out of order."""


# --- requests and responses ----------------------------------------------

#: Default per-task deadlines, seconds. Realtime-path tasks get 5 s,
#: reflective ones 60 s.
DEFAULT_DEADLINES_S: dict[Task, float] = {
    Task.CHAT: 5.0,
    Task.SCORE: 5.0,
    Task.TRANSCRIBE: 5.0,
    Task.SYNTHESIZE: 5.0,
    Task.EXTRACT: 60.0,
    Task.IMAGINE: 60.0,
}


@dataclass(frozen=True)
class PromptPart:
    role: str  # "system" | "user" | "assistant"
    text: str


@dataclass(frozen=True)
class ModelRequest:
    task: Task
    parts: tuple[PromptPart, ...]
    schema: "OutputSchema | None" = None
    temperature: float = 0.0
    max_output_len: int = 2048
    request_id: str = ""

    def prompt_text(self) -> str:
        return "\n".join(p.text for p in self.parts)


@dataclass(frozen=True)
class ModelResponse:
    request_id: str
    status: ResponseStatus
    payload: Any = None
    reason: str | None = None
    latency_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is ResponseStatus.OK


# --- output schemas -------------------------------------------------------
# Schemas validate AND normalize provider payloads. They are generic: the
# modules that own a vocabulary (advice categories, stage ids, facets)
# instantiate them with it, keeping this module at the bottom of the stack.


class OutputSchema(Protocol):
    name: str

    def validate(self, payload: Any) -> Any:
        """Return the normalized payload or raise SchemaViolation."""
        ...


def _as_float01(value: Any, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{context}: expected a number, got {type(value).__name__}")
    x = float(value)
    if not 0.0 <= x <= 1.0:
        raise SchemaViolation(f"{context}: {x} outside [0, 1]")
    return x


@dataclass(frozen=True)
class ScoreSchema:
    """A single float in [0, 1]. Accepts {"score": x} or a bare number."""

    name: str = "score"

    def validate(self, payload: Any) -> float:
        if isinstance(payload, dict) and "score" in payload:
            payload = payload["score"]
        return _as_float01(payload, "score")


@dataclass(frozen=True)
class AdviceSchema:
    """{"category": <one of a closed set>, "text": non-empty str}."""

    categories: frozenset[str]
    aliases: dict[str, str] = field(default_factory=dict)
    name: str = "advice"

    def validate(self, payload: Any) -> dict[str, str]:
        if not isinstance(payload, dict):
            raise SchemaViolation("advice: expected an object")
        category = payload.get("category")
        text = payload.get("text")
        if not isinstance(category, str):
            raise SchemaViolation("advice: category missing")
        category = self.aliases.get(category.strip().lower(), category.strip().lower())
        if category not in self.categories:
            raise SchemaViolation(f'advice: category "{category}" not in the closed set')
        if not isinstance(text, str) or not text.strip():
            raise SchemaViolation("advice: text missing or empty")
        return {"category": category, "text": text.strip()}


@dataclass(frozen=True)
class EntryListSchema:
    """A list of {"dimension": str, "facet": str, "statement": non-empty str}.

    Structural check only; vocabulary enforcement (which facets are legal)
    happens per-entry downstream so one bad entry cannot sink its siblings.
    """

    name: str = "profile-entries"

    def validate(self, payload: Any) -> list[dict[str, str]]:
        if not isinstance(payload, list):
            raise SchemaViolation("profile-entries: expected a list")
        out: list[dict[str, str]] = []
        for i, item in enumerate(payload):
            if not isinstance(item, dict):
                raise SchemaViolation(f"profile-entries[{i}]: expected an object")
            for key in ("dimension", "facet", "statement"):
                if not isinstance(item.get(key), str):
                    raise SchemaViolation(f'profile-entries[{i}]: missing string "{key}"')
            if not item["statement"].strip():
                raise SchemaViolation(f"profile-entries[{i}]: empty statement")
            out.append(
                {
                    "dimension": item["dimension"].strip().lower(),
                    "facet": item["facet"].strip().lower(),
                    "statement": item["statement"].strip(),
                }
            )
        return out


@dataclass(frozen=True)
class DecisionSchema:
    """{"action": "probe"|"advance", "question": optional str} for interviews."""

    name: str = "interview-decision"

    def validate(self, payload: Any) -> dict[str, Any]:
        if not isinstance(payload, dict):
            raise SchemaViolation("interview-decision: expected an object")
        action = payload.get("action")
        if action not in ("probe", "advance"):
            raise SchemaViolation(f'interview-decision: action must be "probe" or "advance", got {action!r}')
        question = payload.get("question")
        if question is not None and not isinstance(question, str):
            raise SchemaViolation("interview-decision: question must be a string when present")
        return {"action": action, "question": question}


@dataclass(frozen=True)
class ReportSchema:
    """Structured end-of-session review.

    {"per_stage": {<stage>: {"score": float01, "review": str}, ... all stages},
     "suggestions": [str, ...],
     "highlights": [{"turn_index": int, "comment": str}, ...]}
    """

    stage_keys: tuple[str, ...]
    name: str = "feedback-report"

    def validate(self, payload: Any) -> dict[str, Any]:
        if not isinstance(payload, dict):
            raise SchemaViolation("feedback-report: expected an object")
        per_stage = payload.get("per_stage")
        if not isinstance(per_stage, dict) or set(per_stage) != set(self.stage_keys):
            raise SchemaViolation(
                f"feedback-report: per_stage must cover exactly {list(self.stage_keys)}"
            )
        norm_stage: dict[str, dict[str, Any]] = {}
        for key in self.stage_keys:
            cell = per_stage[key]
            if not isinstance(cell, dict):
                raise SchemaViolation(f"feedback-report: per_stage[{key}] must be an object")
            score = _as_float01(cell.get("score"), f"per_stage[{key}].score")
            review = cell.get("review")
            if not isinstance(review, str) or not review.strip():
                raise SchemaViolation(f"feedback-report: per_stage[{key}].review missing")
            norm_stage[key] = {"score": score, "review": review.strip()}
        suggestions = payload.get("suggestions", [])
        if not isinstance(suggestions, list) or not all(isinstance(s, str) for s in suggestions):
            raise SchemaViolation("feedback-report: suggestions must be a list of strings")
        highlights = payload.get("highlights", [])
        if not isinstance(highlights, list):
            raise SchemaViolation("feedback-report: highlights must be a list")
        norm_high: list[dict[str, Any]] = []
        for i, h in enumerate(highlights):
            if (
                not isinstance(h, dict)
                or isinstance(h.get("turn_index"), bool)
                or not isinstance(h.get("turn_index"), int)
                or not isinstance(h.get("comment"), str)
            ):
                raise SchemaViolation(f"feedback-report: highlights[{i}] malformed")
            norm_high.append({"turn_index": h["turn_index"], "comment": h["comment"]})
        return {"per_stage": norm_stage, "suggestions": list(suggestions), "highlights": norm_high}


@dataclass(frozen=True)
class TextSchema:
    """Non-empty plain text; accepts {"text": ...} or a bare string."""

    name: str = "text"

    def validate(self, payload: Any) -> str:
        if isinstance(payload, dict) and "text" in payload:
            payload = payload["text"]
        if not isinstance(payload, str) or not payload.strip():
            raise SchemaViolation("text: expected a non-empty string")
        return payload.strip()


# --- audio ----------------------------------------------------------------


@dataclass(frozen=True)
class AudioChunk:
    """A reference to one recorded chunk. `label` is the data handle the
    provider resolves (the mock maps it straight to scripted text)."""

    index: int
    label: str
    duration_s: float = 0.0


@dataclass(frozen=True)
class TranscriptSegment:
    index: int
    text: str
    failed: bool = False


# --- providers -------------------------------------------------------------


class Provider(Protocol):
    name: str

    def complete(self, request: ModelRequest) -> Any:
        """Return a raw payload for the request or raise ProviderError."""
        ...


@dataclass(frozen=True)
class MockRule:
    """Matches when the request task equals `task` and every string in
    `contains` occurs in the prompt text."""

    task: Task
    contains: tuple[str, ...]
    payload: Any

    def matches(self, request: ModelRequest) -> bool:
        if request.task is not self.task:
            return False
        prompt = request.prompt_text()
        return all(s in prompt for s in self.contains)


@dataclass
class MockScript:
    """Ordered rules, first match wins, with per-task defaults underneath."""

    rules: tuple[MockRule, ...] = ()
    defaults: dict[Task, Any] = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = []
        for r in doc.get("rules", []):
            contains = r.get("contains", [])
            if isinstance(contains, str):
                contains = [contains]
            rules.append(
                MockRule(task=Task(r["task"]), contains=tuple(contains), payload=r["payload"])
            )
        defaults = {Task(k): v for k, v in doc.get("defaults", {}).items()}
        return cls(rules=tuple(rules), defaults=defaults, seed=int(doc.get("seed", 0)))

    def lookup(self, request: ModelRequest) -> Any:
        for rule in self.rules:
            if rule.matches(request):
                return rule.payload
        if request.task in self.defaults:
            return self.defaults[request.task]
        return BUILTIN_DEFAULTS[request.task]


#: Last-resort payloads when a script has neither a rule nor a default.
BUILTIN_DEFAULTS: dict[Task, Any] = {
    Task.CHAT: "Let's keep talking about how that felt.",
    Task.SCORE: 0.5,
    Task.EXTRACT: [],
    Task.TRANSCRIBE: "",
    Task.SYNTHESIZE: "",
    Task.IMAGINE: None,  # sentinel: mock computes hash bytes from the prompt
}


class MockProvider:
    """Deterministic offline provider driven by a MockScript.

    Same script + same request sequence => byte-identical payloads. The
    imagine task, absent an explicit rule, answers placeholder bytes that
    embed the sha256 of the prompt so image determinism is checkable.
    """

    name = "mock"

    def __init__(self, script: MockScript | None = None):
        self.script = script or MockScript()

    def complete(self, request: ModelRequest) -> Any:
        payload = self.script.lookup(request)
        if request.task is Task.IMAGINE and payload is None:
            digest = hashlib.sha256(request.prompt_text().encode("utf-8")).hexdigest()
            return b"mock-image sha256=" + digest.encode("ascii")
        if request.task is Task.SYNTHESIZE and payload == "":
            digest = hashlib.sha256(request.prompt_text().encode("utf-8")).hexdigest()
            return b"mock-audio sha256=" + digest.encode("ascii")
        return payload


class HttpChatProvider:
    """Minimal OpenAI-compatible chat-completions binding.

    Supports chat/extract/score text tasks; media tasks are out of scope for
    this binding and raise ProviderError. Never used by the test suite.
    """

    def __init__(
        self,
        name: str,
        base_url: str,
        model: str,
        api_key_env: str = "EMBERCOACH_API_KEY",
        timeout_s: float = 30.0,
    ):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def complete(self, request: ModelRequest) -> Any:
        if request.task in (Task.TRANSCRIBE, Task.SYNTHESIZE, Task.IMAGINE):
            raise ProviderError(f"{self.name}: task {request.task.value} not supported by this binding")
        import os

        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.model,
            "temperature": request.temperature,
            "messages": [{"role": p.role, "content": p.text} for p in request.parts],
        }
        if request.schema is not None:
            body["response_format"] = {"type": "json_object"}
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except requests.Timeout as e:
            raise ProviderTimeout(f"{self.name}: timed out") from e
        except Exception as e:  # noqa: BLE001 - single live boundary
            raise ProviderError(f"{self.name}: {e}") from e
        if request.schema is None:
            return content
        try:
            return json.loads(content)
        except json.JSONDecodeError as e:
            raise ProviderError(f"{self.name}: non-JSON payload for schema request") from e


# --- routing ---------------------------------------------------------------


@dataclass
class GatewayConfig:
    """Which provider answers which task, and how long it may take."""

    bindings: dict[Task, str]
    deadlines_s: dict[Task, float] = field(default_factory=lambda: dict(DEFAULT_DEADLINES_S))

    @classmethod
    def all_mock(cls) -> "GatewayConfig":
        return cls(bindings={t: "mock" for t in Task})


def route_by_task(config: GatewayConfig, task: Task) -> str:
    """Name of the provider bound to `task`; unbound tasks fail fast."""
    name = config.bindings.get(task)
    if not name:
        raise ConfigurationError(f"no provider bound for task {task.value!r}")
    return name


class Gateway:
    """Routes requests to providers, enforces deadlines and output schemas."""

    def __init__(self, config: GatewayConfig, providers: dict[str, Provider]):
        # Startup-time check: every task must resolve to a known provider.
        for task in Task:
            name = route_by_task(config, task)
            if name not in providers:
                raise ConfigurationError(
                    f"task {task.value!r} bound to unknown provider {name!r}"
                )
        self.config = config
        self.providers = providers

    @classmethod
    def all_mock(cls, script: MockScript | None = None) -> "Gateway":
        return cls(GatewayConfig.all_mock(), {"mock": MockProvider(script)})

    def provider_for(self, task: Task) -> Provider:
        return self.providers[route_by_task(self.config, task)]

    def invoke(self, request: ModelRequest) -> ModelResponse:
        """One model call. Never raises for provider trouble: failures and
        timeouts come back as statused responses the caller can degrade on."""
        if request.task in (Task.EXTRACT, Task.SCORE) and request.schema is None:
            raise ValueError(f"{request.task.value} requests must carry an output schema")
        deadline = self.config.deadlines_s.get(request.task, DEFAULT_DEADLINES_S[request.task])
        provider = self.provider_for(request.task)
        t0 = time.perf_counter()
        try:
            payload = provider.complete(request)
        except ProviderTimeout as e:
            return ModelResponse(request.request_id, ResponseStatus.TIMEOUT, reason=str(e))
        except ProviderError as e:
            return ModelResponse(request.request_id, ResponseStatus.FAILED, reason=str(e))
        elapsed = time.perf_counter() - t0
        if elapsed > deadline:
            return ModelResponse(
                request.request_id,
                ResponseStatus.TIMEOUT,
                reason=f"deadline {deadline}s exceeded ({elapsed:.1f}s)",
                latency_ms=elapsed * 1000.0,
            )
        if request.schema is not None:
            try:
                payload = request.schema.validate(payload)
            except SchemaViolation as e:
                return ModelResponse(
                    request.request_id,
                    ResponseStatus.FAILED,
                    reason=f"schema-violation: {e}",
                    latency_ms=elapsed * 1000.0,
                )
        return ModelResponse(
            request.request_id, ResponseStatus.OK, payload=payload, latency_ms=elapsed * 1000.0
        )

    def transcribe(self, chunks: Sequence[AudioChunk], *, request_id: str = "") -> list[TranscriptSegment]:
        """Resolve ordered audio chunks to text segments.

        Chunks must arrive in strictly increasing index order. A provider
        failure marks that segment failed and the rest continue; callers fall
        back to typed input.
        """
        last = -1
        for c in chunks:
            if c.index <= last:
                raise SequencingError(f"audio chunk {c.index} after {last}")
            last = c.index
        segments: list[TranscriptSegment] = []
        for c in chunks:
            req = ModelRequest(
                task=Task.TRANSCRIBE,
                parts=(PromptPart("user", c.label),),
                request_id=f"{request_id}#{c.index}" if request_id else "",
            )
            resp = self.invoke(req)
            if resp.ok and isinstance(resp.payload, str) and resp.payload:
                segments.append(TranscriptSegment(index=c.index, text=resp.payload))
            else:
                log.warning("transcription failed for chunk %s: %s", c.index, resp.reason)
                segments.append(TranscriptSegment(index=c.index, text="", failed=True))
        return segments


# --- config file -----------------------------------------------------------


def build_gateway(doc: dict[str, Any] | str | Path) -> Gateway:
    """Build a gateway from a config document (dict, JSON path, or JSON text).

    {"providers": {name: {"kind": "mock", "script": path?}
                        | {"kind": "openai-compat", "base_url", "model",
                           "api_key_env"?, "timeout_s"?}},
     "bindings": {task: provider-name, ... may be partial; missing -> "mock"
                  only when a mock provider is declared},
     "deadlines_s": {task: seconds, ...}}
    """
    if not isinstance(doc, dict):
        doc = json.loads(Path(doc).read_text(encoding="utf-8"))
    providers: dict[str, Provider] = {}
    for name, pd in doc.get("providers", {"mock": {"kind": "mock"}}).items():
        kind = pd.get("kind", "mock")
        if kind == "mock":
            script = MockScript.from_file(pd["script"]) if pd.get("script") else MockScript()
            providers[name] = MockProvider(script)
        elif kind == "openai-compat":
            providers[name] = HttpChatProvider(
                name=name,
                base_url=pd["base_url"],
                model=pd["model"],
                api_key_env=pd.get("api_key_env", "EMBERCOACH_API_KEY"),
                timeout_s=float(pd.get("timeout_s", 30.0)),
            )
        else:
            raise ConfigurationError(f"unknown provider kind {kind!r}")
    bindings: dict[Task, str] = {}
    declared = doc.get("bindings", {})
    for task in Task:
        if task.value in declared:
            bindings[task] = declared[task.value]
        elif "mock" in providers:
            bindings[task] = "mock"
        else:
            raise ConfigurationError(f"no provider bound for task {task.value!r}")
    deadlines = dict(DEFAULT_DEADLINES_S)
    for k, v in doc.get("deadlines_s", {}).items():
        deadlines[Task(k)] = float(v)
    return Gateway(GatewayConfig(bindings=bindings, deadlines_s=deadlines), providers)
