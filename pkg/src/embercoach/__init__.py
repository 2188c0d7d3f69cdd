"""Parent-led emotion-coaching sessions for young children.

A staged conversation engine with timed coaching advice, a dual-source
child emotional profile, transcript analytics, and a deterministic offline
model provider for tests and demos.
"""

__version__ = "0.1.0"

from .domain import (
    Scenario,
    ScenarioCategory,
    Speaker,
    StageId,
    Transcript,
    Utterance,
    load_scenario_catalog,
    load_seed_catalog,
    validate_scenario,
)
from .engine import (
    ConversationGraph,
    Effect,
    EffectKind,
    EngineConfig,
    SessionEngine,
    StageNode,
    StageStatus,
)
from .gateway import Gateway, MockProvider, MockScript, ModelRequest, ModelResponse, Task
from .modeling import (
    ChildEmotionalProfile,
    EntrySource,
    Facet,
    ProfileDimension,
    ProfileEntry,
    compare_sources,
    integrate_entries,
)
from .runtime import CoachRuntime
from .store import SessionStore

__all__ = [
    "__version__",
    "Scenario",
    "ScenarioCategory",
    "Speaker",
    "StageId",
    "Transcript",
    "Utterance",
    "load_scenario_catalog",
    "load_seed_catalog",
    "validate_scenario",
    "ConversationGraph",
    "Effect",
    "EffectKind",
    "EngineConfig",
    "SessionEngine",
    "StageNode",
    "StageStatus",
    "Gateway",
    "MockProvider",
    "MockScript",
    "ModelRequest",
    "ModelResponse",
    "Task",
    "ChildEmotionalProfile",
    "EntrySource",
    "Facet",
    "ProfileDimension",
    "ProfileEntry",
    "compare_sources",
    "integrate_entries",
    "CoachRuntime",
    "SessionStore",
]
