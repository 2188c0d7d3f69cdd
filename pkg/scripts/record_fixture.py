"""Rebuild the committed fixture session and its golden artifacts.

Drives one complete stage-performance session through the runtime with the
scripted mock provider, copies the resulting event log into tests/fixtures/,
then replays that log through the CLI into tests/goldens/upstage/.

Run from the repository root after any change that intentionally shifts
serialized output, and review the resulting diff before committing:

    python3 scripts/record_fixture.py
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

from embercoach.cli import main as cli_main
from embercoach.domain import load_seed_catalog
from embercoach.gateway import Gateway, MockScript
from embercoach.runtime import CoachRuntime
from embercoach.store import SessionStore

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
GOLDEN = ROOT / "tests" / "goldens" / "upstage"
MOCK_SCRIPT = FIXTURES / "upstage_mock.json"
EVENT_LOG = FIXTURES / "upstage_session.events.jsonl"

SESSION = "sess-upstage-001"
CHILD = "child-01"
SCENARIO = "up-stage"

# One parent-child talk about a school show, start to finish: all five
# stages, fifteen utterances, four clock ticks, one virtual-agent turn.
# Times sit on whole seconds so stage durations telescope exactly.
SCRIPT: list[tuple] = [
    ("start", 0.0),
    ("tick", 0.0),
    ("say", "parent", 2.0, 6.0, "S1",
     "Do you remember the school show yesterday? You stood right in the middle of the big stage."),
    ("say", "child", 7.0, 9.0, "S1", "Yes. Everyone was looking at me."),
    ("say", "parent", 10.0, 13.0, "S1", "What happened just before you walked up the steps?"),
    ("tick", 30.0),
    ("advance", 35.0),
    ("say", "parent", 36.0, 40.0, "S2", "How did your tummy feel while you waited to sing?"),
    ("say", "child", 41.0, 43.0, "S2", "It went boom boom. I was scared."),
    ("say", "parent", 44.0, 48.0, "S2", "Scared, yes. That feeling has a name: nervous."),
    ("tick", 60.0),
    ("advance", 65.0),
    ("say", "parent", 66.0, 70.0, "S3",
     "When people watch me, I feel nervous too. My hands go cold."),
    ("say", "child", 71.0, 73.0, "S3", "Really? You too?"),
    ("advance", 80.0),
    ("say", "parent", 81.0, 85.0, "S4",
     "Being scared felt bad. Was there any tiny part that felt good?"),
    ("say", "child", 86.0, 88.0, "S4", "When everyone clapped I was happy."),
    ("say", "parent", 89.0, 93.0, "S4", "So scared and happy can live in the same day."),
    ("tick", 95.0),
    ("advance", 100.0),
    ("say", "parent", 101.0, 105.0, "S5", "Next time, what could we do before you go on stage?"),
    ("agent", 106.0),
    ("say", "child", 107.0, 109.0, "S5", "Deep breath. And you hold my hand."),
    ("say", "parent", 110.0, 114.0, "S5", "Deal. One brave breath, then we sing."),
    ("advance", 120.0),
]


def drive(runtime: CoachRuntime) -> int:
    """Run the scripted session; returns the outbound message count."""
    sent = 0
    turn = 0
    for step in SCRIPT:
        op = step[0]
        if op == "start":
            out = runtime.start_session(
                SESSION, scenario_id=SCENARIO, child_id=CHILD, at=step[1]
            )
        elif op == "tick":
            out = runtime.tick(SESSION, step[1])
        elif op == "advance":
            out = runtime.advance_stage(SESSION, step[1])
        elif op == "agent":
            out = runtime.invoke_agent(SESSION, step[1])
            turn += 1
        elif op == "say":
            _, speaker, t0, t1, stage, text = step
            out = runtime.push_utterance(
                SESSION,
                {
                    "turn_index": turn,
                    "speaker": speaker,
                    "text": text,
                    "t_start": t0,
                    "t_end": t1,
                    "stage": stage,
                },
            )
            turn += 1
        else:
            raise ValueError(f"unknown step {op!r}")
        sent += len(out)
    return sent


def main() -> int:
    script = MockScript.from_file(MOCK_SCRIPT)
    with tempfile.TemporaryDirectory() as tmp:
        runtime = CoachRuntime(
            SessionStore(tmp), Gateway.all_mock(script), load_seed_catalog()
        )
        sent = drive(runtime)
        log_path = runtime.store.event_log_path(SESSION)
        FIXTURES.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(log_path, EVENT_LOG)
    print(f"recorded {EVENT_LOG.relative_to(ROOT)} ({sent} outbound messages)")

    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    rc = cli_main(
        [
            "replay",
            str(EVENT_LOG),
            "--out",
            str(GOLDEN),
            "--mock-script",
            str(MOCK_SCRIPT),
            "--outbox",
        ]
    )
    if rc != 0:
        print(f"replay exited {rc}", file=sys.stderr)
        return rc

    report = (GOLDEN / "sessions" / SESSION / "report.json").read_text(encoding="utf-8")
    profile = (GOLDEN / "children" / CHILD / "profile.json").read_text(encoding="utf-8")
    print(f"golden report bytes: {len(report)}; profile bytes: {len(profile)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
