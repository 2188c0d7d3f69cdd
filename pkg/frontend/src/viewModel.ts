// viewModel.ts - a pure fold from server messages to what the screen shows.
//
// The whole session view is a left fold over the ordered server stream:
//
//   view = messages.reduce(applyServerMessage, initialView())
//
// applyServerMessage never mutates its input and consults nothing but its
// two arguments, so replaying a captured stream reproduces the identical
// final view, which is exactly what the component tests assert. Each server
// message type owns one slot of the view and touches nothing else (plus the
// lastSeq bookkeeping shared by every numbered frame).

import type { ServerType, WireMessage } from "./protocol.js";

export interface StageNodeView {
  stage: string;
  status: string;
  completionLevel: number;
  enteredAt: number | null;
  exitedAt: number | null;
  turnSpan: [number, number] | null;
}

export interface StripView {
  nodes: StageNodeView[];
  active: string | null;
  finishedAt: number | null;
  degraded: boolean;
}

export interface AdviceCard {
  id: string;
  kind: string;
  stage: string;
  category: string;
  text: string;
  createdAt: number;
  degraded: boolean;
}

export interface AdviceView {
  phase: AdviceCard | null;
  realtime: AdviceCard | null;
  history: AdviceCard[]; // replaced cards, newest first
}

export interface AgentTurn {
  turnIndex: number;
  speaker: string;
  text: string;
  tStart: number;
  tEnd: number;
  stage: string;
}

export interface AgentView {
  turns: AgentTurn[];
  lastAudioB64: string | null;
}

export interface ImageView {
  id: string;
  status: string;
  dataB64: string | null;
  reason: string | null;
}

export interface ReportView {
  report: Record<string, unknown>;
  reward: Record<string, unknown> | null;
}

export interface InterviewQuestionView {
  id: string;
  facet: string;
  text: string;
  followupOf: string | null;
}

export interface InterviewView {
  question: InterviewQuestionView | null;
  done: boolean;
}

export interface ProfileNote {
  childId: string;
  version: number;
  newEntryIds: string[];
  degraded: boolean;
}

export interface ErrorNote {
  code: string;
  message: string;
  echoSeq: number | null;
}

export interface SessionView {
  lastSeq: number;
  strip: StripView | null;
  advice: AdviceView;
  agent: AgentView;
  image: ImageView | null;
  report: ReportView | null;
  interview: InterviewView;
  profile: ProfileNote | null;
  errors: ErrorNote[];
}

export function initialView(): SessionView {
  return {
    lastSeq: 0,
    strip: null,
    advice: { phase: null, realtime: null, history: [] },
    agent: { turns: [], lastAudioB64: null },
    image: null,
    report: null,
    interview: { question: null, done: false },
    profile: null,
    errors: [],
  };
}

/** Which view slot each server type owns; the tests pin this mapping. */
export const SLOT_OF: Record<ServerType, keyof SessionView> = {
  "stage.state": "strip",
  "advice.phase": "advice",
  "advice.realtime": "advice",
  "agent.reply": "agent",
  "image.ready": "image",
  "report.ready": "report",
  "interview.question": "interview",
  "profile.updated": "profile",
  error: "errors",
};

function str(value: unknown, fallback = ""): string {
  return typeof value === "string" ? value : fallback;
}

function num(value: unknown, fallback = 0): number {
  return typeof value === "number" && Number.isFinite(value) ? value : fallback;
}

function numOrNull(value: unknown): number | null {
  return typeof value === "number" && Number.isFinite(value) ? value : null;
}

function toStageNode(raw: unknown): StageNodeView {
  const node = (raw ?? {}) as Record<string, unknown>;
  const span = node["turn_span"];
  return {
    stage: str(node["stage"]),
    status: str(node["status"]),
    completionLevel: num(node["completion_level"]),
    enteredAt: numOrNull(node["entered_at"]),
    exitedAt: numOrNull(node["exited_at"]),
    turnSpan:
      Array.isArray(span) && span.length === 2 ? [num(span[0]), num(span[1])] : null,
  };
}

function toAdviceCard(raw: unknown): AdviceCard {
  const a = (raw ?? {}) as Record<string, unknown>;
  return {
    id: str(a["id"]),
    kind: str(a["kind"]),
    stage: str(a["stage"]),
    category: str(a["category"]),
    text: str(a["text"]),
    createdAt: num(a["created_at"]),
    degraded: a["degraded"] === true,
  };
}

/** Apply one server message. Pure: returns a fresh view, input untouched. */
export function applyServerMessage(view: SessionView, msg: WireMessage): SessionView {
  const body = msg.body;
  // error frames are transient (seq 0) and never advance lastSeq
  const lastSeq = msg.type === "error" ? view.lastSeq : Math.max(view.lastSeq, msg.seq);
  switch (msg.type as ServerType) {
    case "stage.state": {
      const nodes = (body["nodes"] as unknown[]).map(toStageNode);
      const strip: StripView = {
        nodes,
        active: typeof body["active"] === "string" ? (body["active"] as string) : null,
        finishedAt: numOrNull(body["finished_at"]),
        degraded: body["degraded"] === true,
      };
      return { ...view, lastSeq, strip };
    }
    case "advice.phase": {
      const card = toAdviceCard(body["advice"]);
      const history = view.advice.phase
        ? [view.advice.phase, ...view.advice.history]
        : view.advice.history;
      return { ...view, lastSeq, advice: { ...view.advice, phase: card, history } };
    }
    case "advice.realtime": {
      const card = toAdviceCard(body["advice"]);
      const history = view.advice.realtime
        ? [view.advice.realtime, ...view.advice.history]
        : view.advice.history;
      return { ...view, lastSeq, advice: { ...view.advice, realtime: card, history } };
    }
    case "agent.reply": {
      const u = (body["utterance"] ?? {}) as Record<string, unknown>;
      const turn: AgentTurn = {
        turnIndex: num(u["turn_index"]),
        speaker: str(u["speaker"], "agent"),
        text: str(u["text"]),
        tStart: num(u["t_start"]),
        tEnd: num(u["t_end"]),
        stage: str(u["stage"]),
      };
      const audio = typeof body["audio_b64"] === "string" ? (body["audio_b64"] as string) : null;
      return {
        ...view,
        lastSeq,
        agent: { turns: [...view.agent.turns, turn], lastAudioB64: audio },
      };
    }
    case "image.ready": {
      const img = (body["image"] ?? {}) as Record<string, unknown>;
      const image: ImageView = {
        id: str(img["id"]),
        status: str(img["status"]),
        dataB64: typeof img["data_b64"] === "string" ? (img["data_b64"] as string) : null,
        reason: typeof img["reason"] === "string" ? (img["reason"] as string) : null,
      };
      return { ...view, lastSeq, image };
    }
    case "report.ready": {
      const report: ReportView = {
        report: (body["report"] ?? {}) as Record<string, unknown>,
        reward: (body["reward"] as Record<string, unknown> | undefined) ?? null,
      };
      return { ...view, lastSeq, report };
    }
    case "interview.question": {
      if (body["done"] === true) {
        return { ...view, lastSeq, interview: { question: null, done: true } };
      }
      const q = (body["question"] ?? {}) as Record<string, unknown>;
      const question: InterviewQuestionView = {
        id: str(q["id"]),
        facet: str(q["facet"]),
        text: str(q["text"]),
        followupOf: typeof q["followup_of"] === "string" ? (q["followup_of"] as string) : null,
      };
      return { ...view, lastSeq, interview: { question, done: false } };
    }
    case "profile.updated": {
      const profile: ProfileNote = {
        childId: str(body["child_id"]),
        version: num(body["version"]),
        newEntryIds: Array.isArray(body["new_entry_ids"])
          ? (body["new_entry_ids"] as unknown[]).map((x) => str(x))
          : [],
        degraded: body["degraded"] === true,
      };
      return { ...view, lastSeq, profile };
    }
    case "error": {
      const note: ErrorNote = {
        code: str(body["code"]),
        message: str(body["message"]),
        echoSeq: numOrNull(body["echo_seq"]),
      };
      return { ...view, lastSeq, errors: [...view.errors, note] };
    }
  }
}

export function foldStream(messages: Iterable<WireMessage>): SessionView {
  let view = initialView();
  for (const msg of messages) {
    view = applyServerMessage(view, msg);
  }
  return view;
}
