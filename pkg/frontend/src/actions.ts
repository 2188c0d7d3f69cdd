// actions.ts - user gestures become client messages.
//
// Each builder returns exactly one well-formed frame, or null when the
// gesture is disabled in the current view (a disabled gesture sends
// nothing; the caller shows a hint instead). Nothing here talks to a
// socket; that separation is what lets the tests check the
// one-gesture-one-message rule without any I/O.

import type { WireMessage } from "./protocol.js";
import type { SessionView } from "./viewModel.js";

export type NextSeq = () => number;

export interface StartOptions {
  mode?: "game" | "interview";
  scenarioId?: string;
  childId?: string;
  at?: number;
}

export interface UtteranceInput {
  speaker: "parent" | "child";
  text?: string;
  audio?: string;
  tStart: number;
  tEnd: number;
  turnIndex: number;
  stage: string;
}

/** A session is open for conversation gestures when the strip exists, has
 * an active stage, and has not finished. */
export function sessionOpen(view: SessionView): boolean {
  return view.strip !== null && view.strip.active !== null && view.strip.finishedAt === null;
}

export function startSession(
  sessionId: string,
  next: NextSeq,
  opts: StartOptions,
): WireMessage {
  const body: Record<string, unknown> = { mode: opts.mode ?? "game" };
  if (opts.scenarioId !== undefined) body["scenario_id"] = opts.scenarioId;
  if (opts.childId !== undefined) body["child_id"] = opts.childId;
  if (opts.at !== undefined) body["at"] = opts.at;
  return { type: "session.start", session_id: sessionId, seq: next(), body };
}

export function pushUtterance(
  view: SessionView,
  sessionId: string,
  next: NextSeq,
  input: UtteranceInput,
): WireMessage | null {
  if (!sessionOpen(view)) return null;
  const body: Record<string, unknown> = {
    speaker: input.speaker,
    turn_index: input.turnIndex,
    stage: input.stage,
    t_start: input.tStart,
    t_end: input.tEnd,
  };
  if (input.text !== undefined) body["text"] = input.text;
  if (input.audio !== undefined) body["audio"] = input.audio;
  return { type: "utterance.push", session_id: sessionId, seq: next(), body };
}

export function advanceStage(
  view: SessionView,
  sessionId: string,
  next: NextSeq,
  at?: number,
): WireMessage | null {
  if (!sessionOpen(view)) return null; // advance is disabled once S5 completed
  const body: Record<string, unknown> = {};
  if (at !== undefined) body["at"] = at;
  return { type: "stage.advance", session_id: sessionId, seq: next(), body };
}

export function invokeAgent(
  view: SessionView,
  sessionId: string,
  next: NextSeq,
  at?: number,
): WireMessage | null {
  if (!sessionOpen(view)) return null;
  const body: Record<string, unknown> = {};
  if (at !== undefined) body["at"] = at;
  return { type: "agent.invoke", session_id: sessionId, seq: next(), body };
}

export function requestImage(
  view: SessionView,
  sessionId: string,
  next: NextSeq,
  at?: number,
): WireMessage | null {
  if (!sessionOpen(view)) return null;
  const body: Record<string, unknown> = {};
  if (at !== undefined) body["at"] = at;
  return { type: "image.request", session_id: sessionId, seq: next(), body };
}

export function answerInterview(
  view: SessionView,
  sessionId: string,
  next: NextSeq,
  text: string,
): WireMessage | null {
  const open = view.interview.question;
  if (open === null || view.interview.done) return null;
  return {
    type: "interview.answer",
    session_id: sessionId,
    seq: next(),
    body: { question_id: open.id, text },
  };
}

export function endSession(
  sessionId: string,
  next: NextSeq,
  at?: number,
): WireMessage {
  const body: Record<string, unknown> = {};
  if (at !== undefined) body["at"] = at;
  return { type: "session.end", session_id: sessionId, seq: next(), body };
}
