"""Transcript analytics: word counts, emotion-word counts, durations, halves.

Counting is pure and lexicon-driven so results are reproducible across runs
and machines. The batch report walks persisted session artifacts and renders
one CSV row per session in deterministic order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .domain import STAGE_ORDER, Speaker, StageId, Transcript
from .engine import ConversationGraph, StageStatus

log = logging.getLogger(__name__)


class AnalyticsError(ValueError):
    pass


class MatchingMode(str, Enum):
    TOKEN = "token"  # whitespace tokens, casefolded, edge punctuation stripped
    SUBSTRING = "substring"  # longest-match non-overlapping scan (no word boundaries)


@dataclass(frozen=True)
class EmotionLexicon:
    positive: frozenset[str]
    negative: frozenset[str]
    matching_mode: MatchingMode = MatchingMode.TOKEN

    def __post_init__(self) -> None:
        if not self.positive and not self.negative:
            raise AnalyticsError("lexicon has no terms")
        overlap = self.positive & self.negative
        if overlap:
            raise AnalyticsError(f"terms in both polarities: {sorted(overlap)}")

    @classmethod
    def from_file(
        cls, path: str | Path, matching_mode: MatchingMode = MatchingMode.TOKEN
    ) -> "EmotionLexicon":
        """Parse the two-section format: a [positive] header, then one term
        per line, then a [negative] header and its terms. Blank lines and
        lines starting with # are skipped. Terms are casefolded."""
        positive: set[str] = set()
        negative: set[str] = set()
        current: set[str] | None = None
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[positive]":
                current = positive
            elif line == "[negative]":
                current = negative
            elif line.startswith("["):
                raise AnalyticsError(f"{path}:{lineno}: unknown section {line}")
            else:
                if current is None:
                    raise AnalyticsError(f"{path}:{lineno}: term before any section header")
                current.add(line.casefold())
        return cls(
            positive=frozenset(positive),
            negative=frozenset(negative),
            matching_mode=matching_mode,
        )


@dataclass(frozen=True)
class EmotionCounts:
    positive: int = 0
    negative: int = 0

    def __add__(self, other: "EmotionCounts") -> "EmotionCounts":
        return EmotionCounts(self.positive + other.positive, self.negative + other.negative)


def _trim_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


#: Splits text into countable words. The default suits space-delimited text;
#: pass a segmenter for languages without spaces.
Segmenter = Callable[[str], list[str]]


def default_segmenter(text: str) -> list[str]:
    return text.split()


def word_count(text: str, segmenter: Segmenter = default_segmenter) -> int:
    return len(segmenter(text))


def count_emotion_words(text: str, lexicon: EmotionLexicon) -> EmotionCounts:
    """Count lexicon hits in text.

    Token mode: each whitespace token, casefolded with edge punctuation
    trimmed, is one candidate; every occurrence counts. Substring mode:
    scan the casefolded text left to right, longest match first, matched
    spans do not overlap.
    """
    if lexicon.matching_mode is MatchingMode.TOKEN:
        pos = neg = 0
        for raw in text.split():
            tok = _trim_punct(raw).casefold()
            if not tok:
                continue
            if tok in lexicon.positive:
                pos += 1
            elif tok in lexicon.negative:
                neg += 1
        return EmotionCounts(pos, neg)
    # substring mode
    folded = text.casefold()
    terms = sorted(lexicon.positive | lexicon.negative, key=len, reverse=True)
    pos = neg = 0
    i = 0
    n = len(folded)
    while i < n:
        hit = None
        for t in terms:
            if folded.startswith(t, i):
                hit = t
                break
        if hit is None:
            i += 1
        else:
            if hit in lexicon.positive:
                pos += 1
            else:
                neg += 1
            i += len(hit)
    return EmotionCounts(pos, neg)


# --- metrics -------------------------------------------------------------------


@dataclass
class TranscriptMetrics:
    session_id: str
    duration_s: float
    turns: int
    words_by_speaker: dict[str, int]
    emotion_by_speaker: dict[str, EmotionCounts]
    stage_durations: dict[StageId, float] = field(default_factory=dict)

    @property
    def total_words(self) -> int:
        return sum(self.words_by_speaker.values())

    @property
    def emotion_total(self) -> EmotionCounts:
        total = EmotionCounts()
        for c in self.emotion_by_speaker.values():
            total = total + c
        return total


def compute_metrics(
    transcript: Transcript,
    graph: ConversationGraph,
    lexicon: EmotionLexicon,
    *,
    segmenter: Segmenter = default_segmenter,
) -> TranscriptMetrics:
    """Headline numbers for one session.

    duration_s is finished_at - created_at for finished sessions, else the
    transcript's session end time. Stage durations use exit minus entry
    (active stages run to the session end), the same arithmetic the engine
    records, so they telescope to the total for finished sessions.
    """
    if transcript.session_id != graph.session_id:
        raise AnalyticsError(
            f"transcript {transcript.session_id!r} does not belong to graph {graph.session_id!r}"
        )
    if graph.finished:
        duration = (graph.finished_at or 0.0) - graph.created_at
        horizon = graph.finished_at or 0.0
    else:
        duration = transcript.session_t_end
        horizon = transcript.session_t_end
    words: dict[str, int] = {s.value: 0 for s in Speaker}
    emotions: dict[str, EmotionCounts] = {s.value: EmotionCounts() for s in Speaker}
    for u in transcript.utterances:
        words[u.speaker.value] += word_count(u.text, segmenter)
        emotions[u.speaker.value] = emotions[u.speaker.value] + count_emotion_words(
            u.text, lexicon
        )
    stage_durations: dict[StageId, float] = {}
    for node in graph.nodes:
        if node.entered_at is None:
            continue
        if node.status is StageStatus.COMPLETE and node.exited_at is not None:
            stage_durations[node.stage] = node.exited_at - node.entered_at
        elif node.status is StageStatus.ACTIVE:
            stage_durations[node.stage] = horizon - node.entered_at
    return TranscriptMetrics(
        session_id=transcript.session_id,
        duration_s=duration,
        turns=len(transcript.utterances),
        words_by_speaker=words,
        emotion_by_speaker=emotions,
        stage_durations=stage_durations,
    )


def split_halves(
    transcript: Transcript,
    lexicon: EmotionLexicon,
    *,
    segmenter: Segmenter = default_segmenter,
) -> tuple[TranscriptMetrics, TranscriptMetrics]:
    """Metrics for the first and second temporal half of a session.

    An utterance belongs to the first half iff its t_start is strictly
    below half the session duration. Recombining the halves reproduces the
    whole-session counts exactly. Stage durations are not split.
    """
    duration = transcript.session_t_end
    if duration <= 0.0:
        raise AnalyticsError("cannot split a session with no duration")
    mid = duration / 2.0
    halves: tuple[list, list] = ([], [])
    for u in transcript.utterances:
        (halves[0] if u.t_start < mid else halves[1]).append(u)
    out = []
    for part in halves:
        words: dict[str, int] = {s.value: 0 for s in Speaker}
        emotions: dict[str, EmotionCounts] = {s.value: EmotionCounts() for s in Speaker}
        for u in part:
            words[u.speaker.value] += word_count(u.text, segmenter)
            emotions[u.speaker.value] = emotions[u.speaker.value] + count_emotion_words(
                u.text, lexicon
            )
        out.append(
            TranscriptMetrics(
                session_id=transcript.session_id,
                duration_s=mid,
                turns=len(part),
                words_by_speaker=words,
                emotion_by_speaker=emotions,
            )
        )
    return out[0], out[1]


# --- batch report ----------------------------------------------------------------

CSV_COLUMNS = (
    "session_id",
    "scenario_id",
    "duration_s",
    "turns",
    "words_parent",
    "words_child",
    "words_agent",
    "pos_parent",
    "neg_parent",
    "pos_child",
    "neg_child",
    "pos_child_h1",
    "neg_child_h1",
    "pos_child_h2",
    "neg_child_h2",
    *(f"stage_s_{s.value}" for s in STAGE_ORDER),
)


@dataclass
class BatchResult:
    rows: list[dict[str, object]]
    warnings: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.warnings)


def batch_report(
    root: str | Path,
    lexicon: EmotionLexicon,
    *,
    segmenter: Segmenter = default_segmenter,
) -> BatchResult:
    """One row per persisted session under root (any directory holding a
    transcript.json + graph.json pair). Unreadable sessions are skipped with
    a warning; rows sort by session_id."""
    root = Path(root)
    rows: list[dict[str, object]] = []
    warnings: list[str] = []
    for tpath in sorted(root.rglob("transcript.json")):
        gpath = tpath.parent / "graph.json"
        try:
            transcript = Transcript.from_dict(json.loads(tpath.read_text(encoding="utf-8")))
            graph = ConversationGraph.from_dict(json.loads(gpath.read_text(encoding="utf-8")))
            metrics = compute_metrics(transcript, graph, lexicon, segmenter=segmenter)
            if transcript.session_t_end > 0.0 and transcript.utterances:
                h1, h2 = split_halves(transcript, lexicon, segmenter=segmenter)
                child_h1 = h1.emotion_by_speaker[Speaker.CHILD.value]
                child_h2 = h2.emotion_by_speaker[Speaker.CHILD.value]
            else:
                child_h1 = child_h2 = EmotionCounts()
        except (OSError, ValueError, KeyError) as e:
            warnings.append(f"{tpath.parent.name}: {e}")
            log.warning("skipping session at %s: %s", tpath.parent, e)
            continue
        row: dict[str, object] = {
            "session_id": transcript.session_id,
            "scenario_id": transcript.scenario_id,
            "duration_s": metrics.duration_s,
            "turns": metrics.turns,
            "words_parent": metrics.words_by_speaker[Speaker.PARENT.value],
            "words_child": metrics.words_by_speaker[Speaker.CHILD.value],
            "words_agent": metrics.words_by_speaker[Speaker.AGENT.value],
            "pos_parent": metrics.emotion_by_speaker[Speaker.PARENT.value].positive,
            "neg_parent": metrics.emotion_by_speaker[Speaker.PARENT.value].negative,
            "pos_child": metrics.emotion_by_speaker[Speaker.CHILD.value].positive,
            "neg_child": metrics.emotion_by_speaker[Speaker.CHILD.value].negative,
            "pos_child_h1": child_h1.positive,
            "neg_child_h1": child_h1.negative,
            "pos_child_h2": child_h2.positive,
            "neg_child_h2": child_h2.negative,
        }
        for s in STAGE_ORDER:
            row[f"stage_s_{s.value}"] = metrics.stage_durations.get(s, "")
        rows.append(row)
    rows.sort(key=lambda r: str(r["session_id"]))
    return BatchResult(rows=rows, warnings=warnings)


def render_csv(result: BatchResult) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in result.rows:
        writer.writerow(row)
    return buf.getvalue()
