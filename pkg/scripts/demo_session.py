"""Drive one full coaching session against the offline provider and print
every frame the server would send.

Usage: python3 scripts/demo_session.py [--store DIR]

With no --store the artifacts land in a temporary directory that is kept
around and printed at the end, so you can poke at the event log, transcript,
report, and profile the run produced.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from embercoach import CoachRuntime, Gateway, MockScript, SessionStore, Task, load_seed_catalog
from embercoach.gateway import MockRule

SESSION = "demo-1"
CHILD = "demo-kid"

# A scripted provider keyed on the prompt each template opens with, so the
# demo exercises the structured paths instead of the degraded fallbacks.
PHASE_ADVICE = {
    "S1": ("open-ended-questioning", "Invite the goodbye story out, one small step at a time."),
    "S2": ("open-ended-questioning", "Ask where in the body the feeling sat, and what to call it."),
    "S3": ("empathy-and-acceptance", "Say the fear makes sense; share a goodbye that was hard for you."),
    "S4": ("open-ended-questioning", "Wonder together what made the feeling grow so big."),
    "S5": ("collaborative-problem-solving", "Build one tiny plan for the next goodbye and who does what."),
}

SCRIPT = MockScript(
    rules=tuple(
        MockRule(
            Task.CHAT,
            (f"phase advice for stage {stage}",),
            {"category": category, "text": text},
        )
        for stage, (category, text) in PHASE_ADVICE.items()
    )
    + (
        MockRule(
            Task.CHAT,
            ("realtime advice",),
            {
                "category": "empathy-and-acceptance",
                "text": "Mirror the last feeling word back before asking anything new.",
            },
        ),
        MockRule(Task.CHAT, ("agent reply",), "A knot! I get string-belly too. What untied yours?"),
        MockRule(Task.CHAT, ("reward caption",), "Four stars for naming the knot and making a plan!"),
        MockRule(
            Task.EXTRACT,
            ("session review",),
            {
                "per_stage": {
                    "S1": {"score": 0.6, "review": "The goodbye scene came back in the child's own words."},
                    "S2": {"score": 0.7, "review": "The knot image gave the fear a name."},
                    "S3": {"score": 0.75, "review": "Permission to be scared landed."},
                    "S4": {"score": 0.8, "review": "The mystery pickup time surfaced as the trigger."},
                    "S5": {"score": 0.9, "review": "A concrete stone-and-count plan, owned by the child."},
                },
                "suggestions": [
                    "Rehearse the lucky-stone count once before the next school morning.",
                    "Name your own goodbye feeling first to open the door.",
                ],
                "highlights": [
                    {"turn_index": 3, "comment": "A vivid body image for the feeling."},
                    {"turn_index": 7, "comment": "The child proposed the plan unprompted."},
                ],
            },
        ),
        MockRule(
            Task.EXTRACT,
            ("profile extraction", "scared"),
            [
                {
                    "dimension": "regulation",
                    "facet": "emotion-regulation",
                    "statement": "Holds a familiar object and counts to settle a scared feeling.",
                }
            ],
        ),
    ),
    defaults={
        Task.CHAT: {
            "category": "open-ended-questioning",
            "text": "Ask one small open question about the feeling.",
        },
        Task.SCORE: 0.62,
        Task.EXTRACT: [],
    },
)


def show(frames) -> None:
    for m in frames:
        body = m.body
        if m.type.value.startswith("advice."):
            detail = f'{body["advice"]["category"]}: {body["advice"]["text"]}'
        elif m.type.value == "stage.state":
            active = body.get("active") or "-"
            levels = " ".join(
                f'{n["stage"]}={n["completion_level"]:.2f}' for n in body["nodes"]
            )
            detail = f"active={active} {levels}"
        elif m.type.value == "agent.reply":
            detail = f'"{body["utterance"]["text"]}"'
        elif m.type.value == "image.ready":
            detail = f'{body["image"]["id"]} {body["image"]["status"]}'
        elif m.type.value == "profile.updated":
            detail = f'version {body["version"]}, new entries {body["new_entry_ids"]}'
        elif m.type.value == "report.ready":
            reward = body.get("reward", {})
            detail = f'{len(body["report"]["per_stage"])} stages reviewed, reward: {reward.get("caption", "-")}'
        else:
            detail = ""
        print(f"  <- seq {m.seq:>2} {m.type.value:<18} {detail}")


def utter(runtime, turn, speaker, text, t0, t1):
    stage = runtime.states[SESSION].engine.active_stage().value
    print(f"-> utterance.push [{stage}] {speaker}: {text}")
    show(
        runtime.push_utterance(
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
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--store", default=None, help="state directory (default: a temp dir)")
    args = parser.parse_args()
    root = Path(args.store) if args.store else Path(tempfile.mkdtemp(prefix="ember-demo-"))

    catalog = load_seed_catalog()
    runtime = CoachRuntime(SessionStore(root), Gateway.all_mock(SCRIPT), catalog)
    scenario = catalog[0]

    script_path = root / "demo_mock.json"
    script_path.write_text(
        json.dumps(
            {
                "rules": [
                    {"task": r.task.value, "contains": list(r.contains), "payload": r.payload}
                    for r in SCRIPT.rules
                ],
                "defaults": {t.value: p for t, p in SCRIPT.defaults.items()},
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    print(f"scenario: {scenario.id} ({scenario.title})")
    print(f"-> session.start child={CHILD}")
    show(runtime.start_session(SESSION, scenario_id=scenario.id, child_id=CHILD, at=0.0))

    utter(runtime, 0, "parent", "This morning at the gate felt hard, didn't it?", 1.0, 4.0)
    utter(runtime, 1, "child", "I didn't want you to go away.", 5.0, 8.0)

    print("-> stage.advance at=12")
    show(runtime.advance_stage(SESSION, at=12.0))

    utter(runtime, 2, "parent", "What did that feeling feel like inside?", 13.0, 16.0)
    utter(runtime, 3, "child", "Like a big knot. I was scared you'd be late.", 17.0, 21.0)

    print("-> agent.invoke at=22 (the puppet speaks)")
    show(runtime.invoke_agent(SESSION, at=22.0))

    print("-> tick at=35 (server clock, realtime advice window)")
    show(runtime.tick(SESSION, 35.0))

    print("-> stage.advance at=36")
    show(runtime.advance_stage(SESSION, at=36.0))

    utter(runtime, 5, "child", "Being scared is okay, you said so.", 37.0, 40.0)

    print("-> image.request at=41")
    show(runtime.request_image(SESSION, at=41.0))

    print("-> stage.advance at=45")
    show(runtime.advance_stage(SESSION, at=45.0))

    utter(runtime, 6, "parent", "It got big because pickup time was a mystery?", 46.0, 50.0)

    print("-> stage.advance at=55")
    show(runtime.advance_stage(SESSION, at=55.0))

    utter(runtime, 7, "child", "Next time I hold the lucky stone and count.", 56.0, 60.0)

    print("-> stage.advance at=65 (completes S5, session finishes)")
    show(runtime.advance_stage(SESSION, at=65.0))

    print()
    print(f"artifacts: {root}")
    for rel in (
        f"sessions/{SESSION}/events.jsonl",
        f"sessions/{SESSION}/transcript.json",
        f"sessions/{SESSION}/report.json",
        f"children/{CHILD}/profile.json",
    ):
        print(f"  {rel}")
    print()
    print("replay it yourself (the same script makes the rebuild byte-identical):")
    print(
        f"  embercoach replay {root}/sessions/{SESSION}/events.jsonl"
        f" --mock-script {script_path} --out ./rebuilt"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
