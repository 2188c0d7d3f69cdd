"""Filesystem persistence: per-session documents plus global state.

Layout under one root directory:

    sessions/<session_id>/events.jsonl     append-only event log (write-ahead)
    sessions/<session_id>/transcript.json
    sessions/<session_id>/graph.json
    sessions/<session_id>/advice.json
    sessions/<session_id>/report.json
    children/<child_id>/profile.json
    badge_history.json
    catalog.json                           copy of the active scenario catalog

Whole-document writes go through write-temp-then-rename so readers never
see a torn file. The event log is the source of truth: every accepted
mutation is appended and flushed before its effects run, so a crash loses
at most the event in flight.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence


def dump_json(obj: Any) -> str:
    """The one serialization used for every persisted document."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def dump_event(event: dict[str, Any]) -> str:
    return json.dumps(event, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


@dataclass
class EventLogReadResult:
    events: list[dict[str, Any]]
    corrupt_line: int | None = None  # 1-based line number of the first bad line, if any


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- paths --

    def session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def event_log_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "events.jsonl"

    def transcript_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "transcript.json"

    def graph_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "graph.json"

    def advice_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "advice.json"

    def report_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "report.json"

    def profile_path(self, child_id: str) -> Path:
        return self.root / "children" / child_id / "profile.json"

    def badge_history_path(self) -> Path:
        return self.root / "badge_history.json"

    def catalog_path(self) -> Path:
        return self.root / "catalog.json"

    # -- whole documents --

    def write_json(self, path: Path, obj: Any) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(dump_json(obj))
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def read_json(self, path: Path) -> Any:
        return json.loads(path.read_text(encoding="utf-8"))

    # -- event log --

    def append_event(self, session_id: str, event: dict[str, Any]) -> None:
        """Append one event and flush it to disk before returning."""
        path = self.event_log_path(session_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(dump_event(event) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def rewrite_events(self, session_id: str, events: Sequence[dict[str, Any]]) -> None:
        """Atomically replace a session's log with exactly these events.

        Recovery uses this to drop a torn final line; without the repair,
        anything appended after the tear would be unreadable on the next
        restart because readers stop at the first corrupt line.
        """
        path = self.event_log_path(session_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                for event in events:
                    f.write(dump_event(event) + "\n")
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def read_events(self, session_id_or_path: str | Path) -> EventLogReadResult:
        """Read an event log, stopping at the first corrupt line.

        Accepts either a session id (resolved inside this store) or a direct
        path to a .jsonl file. A truncated final line (the event in flight
        when a process died) surfaces as corrupt_line, not an exception.
        """
        path = (
            Path(session_id_or_path)
            if str(session_id_or_path).endswith(".jsonl")
            else self.event_log_path(str(session_id_or_path))
        )
        events: list[dict[str, Any]] = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    doc = json.loads(stripped)
                except json.JSONDecodeError:
                    return EventLogReadResult(events=events, corrupt_line=lineno)
                if not isinstance(doc, dict) or "kind" not in doc:
                    return EventLogReadResult(events=events, corrupt_line=lineno)
                events.append(doc)
        return EventLogReadResult(events=events)

    # -- listings --

    def list_sessions(self) -> list[str]:
        base = self.root / "sessions"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    def list_children(self) -> list[str]:
        base = self.root / "children"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())
