"""Command line entry points.

Exit status: 0 success, 1 completed with warnings or validation failures,
2 usage errors (bad arguments, missing files), 3 internal errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analytics import AnalyticsError, EmotionLexicon, MatchingMode, batch_report, render_csv
from .domain import (
    CatalogError,
    Transcript,
    load_scenario_catalog,
    load_seed_catalog,
    seed_catalog_path,
)
from .gateway import Gateway, MockScript, build_gateway
from .modeling import load_interview_questions
from .runtime import CoachRuntime
from .store import SessionStore
from .wire import serialize_message

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

log = logging.getLogger(__name__)


def _build_runtime(store_dir: str, args: argparse.Namespace) -> CoachRuntime:
    store = SessionStore(store_dir)
    if getattr(args, "gateway_config", None):
        gateway = build_gateway(Path(args.gateway_config))
    elif getattr(args, "mock_script", None):
        gateway = Gateway.all_mock(MockScript.from_file(args.mock_script))
    else:
        gateway = Gateway.all_mock()
    catalog = (
        load_scenario_catalog(Path(args.catalog))
        if getattr(args, "catalog", None)
        else load_seed_catalog()
    )
    return CoachRuntime(store, gateway, catalog)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    runtime = _build_runtime(args.store, args)
    recovered = runtime.recover()
    if recovered:
        print(f"recovered {len(recovered)} live session(s): {', '.join(recovered)}")
    app = create_app(
        runtime,
        ServiceConfig(token=args.token, auto_tick=not args.no_auto_tick),
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    log_path = Path(args.log)
    if not log_path.is_file():
        print(f"error: event log not found: {log_path}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    runtime = _build_runtime(str(out_dir), args)
    result = runtime.store.read_events(log_path)
    status = EXIT_OK
    if result.corrupt_line is not None:
        print(
            f"warning: corrupt event at line {result.corrupt_line}; "
            f"replaying the {len(result.events)} events before it",
            file=sys.stderr,
        )
        status = EXIT_PARTIAL
    outcome = runtime.replay_events(result.events)
    if outcome.halted_at is not None:
        print(
            f"warning: replay halted at event {outcome.halted_at}: {outcome.error}",
            file=sys.stderr,
        )
        status = EXIT_PARTIAL
    for sid in outcome.session_ids:
        # Persist artifacts for sessions the log left unfinished, too.
        state = runtime.states.get(sid)
        if state is not None and state.engine is not None and not state.engine.finished:
            transcript = Transcript(
                session_id=sid,
                scenario_id=state.engine.scenario.id,
                utterances=list(state.engine.transcript_utterances),
                session_t_end=state.engine.clock.now,
            )
            runtime.store.write_json(runtime.store.transcript_path(sid), transcript.to_dict())
            runtime.store.write_json(runtime.store.graph_path(sid), state.engine.graph.to_dict())
        if args.outbox and state is not None:
            lines = "\n".join(serialize_message(m) for m in state.outbox)
            path = runtime.store.session_dir(sid) / "outbox.jsonl"
            path.write_text(lines + ("\n" if lines else ""), encoding="utf-8")
    print(
        f"replayed {outcome.applied}/{len(result.events)} events "
        f"for session(s): {', '.join(outcome.session_ids) or '(none)'} -> {out_dir}"
    )
    return status


def cmd_analyze(args: argparse.Namespace) -> int:
    root = Path(args.root)
    if not root.is_dir():
        print(f"error: no such directory: {root}", file=sys.stderr)
        return EXIT_USAGE
    lexicon_path = Path(args.lexicon) if args.lexicon else _default_lexicon_path()
    if not lexicon_path.is_file():
        print(f"error: lexicon file not found: {lexicon_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        lexicon = EmotionLexicon.from_file(lexicon_path, MatchingMode(args.mode))
    except AnalyticsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    result = batch_report(root, lexicon)
    sys.stdout.write(render_csv(result))
    for w in result.warnings:
        print(f"warning: skipped {w}", file=sys.stderr)
    return EXIT_PARTIAL if result.partial else EXIT_OK


def cmd_scenarios(args: argparse.Namespace) -> int:
    path = Path(args.validate) if args.validate else seed_catalog_path()
    if not path.is_file():
        print(f"error: catalog file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenarios = load_scenario_catalog(path)
    except CatalogError as e:
        print(f"invalid catalog: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    if args.validate:
        print(f"{len(scenarios)} scenarios ok")
    else:
        for s in scenarios:
            print(f"{s.id}\t{s.category}\t{s.title}\t{','.join(s.common_emotions)}")
    return EXIT_OK


def cmd_interview(args: argparse.Namespace) -> int:
    runtime = _build_runtime(args.store, args)
    questions = (
        load_interview_questions(Path(args.questions)) if args.questions else None
    )
    if questions is not None:
        runtime.questions = list(questions)
    session_id = args.session
    out = runtime.start_session(session_id, child_id=args.child, mode="interview")
    print(f"interview for child {args.child!r}; empty answer ends the interview\n")
    while True:
        question_msgs = [m for m in out if m.type.value == "interview.question"]
        if not question_msgs:
            break
        body = question_msgs[-1].body
        if body.get("done"):
            print("\nall questions covered.")
            break
        q = body["question"]
        print(f"[{q['facet']}] {q['text']}")
        try:
            answer = input("> ").strip()
        except EOFError:
            answer = ""
        if not answer:
            break
        out = runtime.answer_interview(session_id, q["id"], answer)
    runtime.end_session(session_id, at=0.0)
    profile = runtime.store.read_json(runtime.store.profile_path(args.child))
    entries = profile.get("entries", [])
    print(f"\nprofile for {args.child!r}: version {profile.get('version')}, {len(entries)} entries")
    for e in entries:
        print(f"  [{e['dimension']}/{e['facet']}] {e['statement']}")
    return EXIT_OK


def _default_lexicon_path() -> Path:
    return Path(__file__).parent / "data" / "lexicons" / "emotions_en.txt"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embercoach",
        description="Parent-led emotion-coaching sessions: serve, replay, analyze.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the WebSocket/HTTP service")
    p.add_argument("--store", default="./ember-store", help="state directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8322)
    p.add_argument("--token", default=None, help="shared secret clients must present")
    p.add_argument("--catalog", default=None, help="scenario catalog JSON (default: bundled)")
    p.add_argument("--gateway-config", default=None, help="provider bindings JSON")
    p.add_argument("--mock-script", default=None, help="mock provider script JSON")
    p.add_argument("--no-auto-tick", action="store_true", help="disable the server clock loop")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="rebuild a session from an event log")
    p.add_argument("log", help="path to an events.jsonl file")
    p.add_argument("--out", default="./replay-out", help="fresh store to write artifacts into")
    p.add_argument("--catalog", default=None)
    p.add_argument("--gateway-config", default=None)
    p.add_argument("--mock-script", default=None)
    p.add_argument("--outbox", action="store_true", help="also write the outbound message stream")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze", help="CSV metrics for persisted sessions")
    p.add_argument("root", help="directory containing session artifacts")
    p.add_argument("--lexicon", default=None, help="emotion lexicon file (default: bundled)")
    p.add_argument(
        "--mode",
        choices=[m.value for m in MatchingMode],
        default=MatchingMode.TOKEN.value,
        help="lexicon matching mode",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scenarios", help="list or validate a scenario catalog")
    p.add_argument(
        "--validate",
        metavar="FILE",
        default=None,
        help="validate this catalog file instead of listing the bundled one",
    )
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("interview", help="run a parent interview at the terminal")
    p.add_argument("--store", default="./ember-store")
    p.add_argument("--child", required=True, help="child id the profile belongs to")
    p.add_argument("--session", default="interview-cli", help="session id for the event log")
    p.add_argument("--questions", default=None, help="question list JSON (default: bundled)")
    p.add_argument("--gateway-config", default=None)
    p.add_argument("--mock-script", default=None)
    p.set_defaults(func=cmd_interview)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - last-resort boundary
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
