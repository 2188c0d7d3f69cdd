"""Shared strategies and helpers for the test suite.

Times are drawn from a dyadic grid (multiples of 1/1024) so sums and
differences of generated instants are exact in binary floating point and
duration identities can be asserted with zero tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from hypothesis import strategies as st

from embercoach.domain import Speaker, StageId, Utterance
from embercoach.engine import (
    ClosedSessionError,
    EngineConfig,
    SessionEngine,
    StageStatus,
)

GRID = 1024  # steps per second on the dyadic time grid


def from_grid(n: int) -> float:
    return n / GRID


def grid_steps(min_n: int = 0, max_n: int = 64 * GRID):
    """Non-negative time increments on the grid, as integers."""
    return st.integers(min_value=min_n, max_value=max_n)


# --- scripted session walks --------------------------------------------------

OP_UTTER = "utter"
OP_TICK = "tick"
OP_ADVANCE = "advance"


@st.composite
def walk_ops(draw, max_ops: int = 40):
    """A random schedule of engine operations with grid-time increments."""
    n = draw(st.integers(min_value=1, max_value=max_ops))
    ops = []
    for _ in range(n):
        kind = draw(st.sampled_from([OP_UTTER, OP_UTTER, OP_UTTER, OP_TICK, OP_ADVANCE]))
        if kind == OP_UTTER:
            speaker = draw(st.sampled_from(list(Speaker)))
            gap = draw(grid_steps(0, 8 * GRID))
            dur = draw(grid_steps(0, 16 * GRID))
            ops.append((OP_UTTER, speaker, gap, dur))
        elif kind == OP_TICK:
            ops.append((OP_TICK, draw(grid_steps(0, 64 * GRID))))
        else:
            ops.append((OP_ADVANCE, draw(grid_steps(0, 8 * GRID))))
    return ops


@dataclass
class WalkTrace:
    """What happened while applying a walk, op by op."""

    engine: SessionEngine
    applied: list[tuple] = field(default_factory=list)
    effects: list[list] = field(default_factory=list)


def run_walk(scenario, ops, *, config: EngineConfig | None = None) -> WalkTrace:
    """Apply a generated op schedule to a fresh engine.

    Ops that arrive after the session finished are dropped (the engine
    rejects them; that rejection is separately under test). Time only moves
    forward, by construction of the increments.
    """
    engine, _ = SessionEngine.start("walk", scenario, at=0.0, config=config)
    trace = WalkTrace(engine=engine)
    now_units = 0
    for op in ops:
        if engine.finished:
            break
        if op[0] == OP_UTTER:
            _, speaker, gap, dur = op
            start = now_units + gap
            end = start + dur
            u = Utterance(
                turn_index=len(engine.transcript_utterances),
                speaker=speaker,
                text=f"turn {len(engine.transcript_utterances)}",
                t_start=from_grid(start),
                t_end=from_grid(end),
                stage=engine.active_stage(),
            )
            effects = engine.ingest_utterance(u)
            now_units = end
        elif op[0] == OP_TICK:
            now_units += op[1]
            effects = engine.tick(from_grid(now_units))
        else:
            now_units += op[1]
            effects = engine.advance_stage(from_grid(now_units))
        trace.applied.append(op)
        trace.effects.append(effects)
    return trace


def finish_walk(engine: SessionEngine) -> None:
    """Advance whatever stages remain so the session finishes."""
    while not engine.finished:
        try:
            engine.advance_stage(engine.clock.now)
        except ClosedSessionError:
            break


def completed_durations(engine: SessionEngine) -> float:
    return sum(
        n.exited_at - n.entered_at
        for n in engine.graph.nodes
        if n.status is StageStatus.COMPLETE
    )
