// protocol.ts - the JSON wire protocol, client side.
//
// Mirrors docs/protocol.md in the parent repository: sixteen message types,
// seven client-to-server and nine server-to-client, one JSON object per
// frame. Parsing is strict so a malformed server frame fails loudly in
// development instead of corrupting the view.

export const CLIENT_TYPES = [
  "session.start",
  "utterance.push",
  "stage.advance",
  "agent.invoke",
  "image.request",
  "interview.answer",
  "session.end",
] as const;

export const SERVER_TYPES = [
  "advice.phase",
  "advice.realtime",
  "stage.state",
  "agent.reply",
  "image.ready",
  "report.ready",
  "interview.question",
  "profile.updated",
  "error",
] as const;

export type ClientType = (typeof CLIENT_TYPES)[number];
export type ServerType = (typeof SERVER_TYPES)[number];
export type MessageType = ClientType | ServerType;

export interface WireMessage {
  type: MessageType;
  session_id: string;
  seq: number;
  body: Record<string, unknown>;
}

export class ProtocolError extends Error {
  constructor(
    public readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ProtocolError";
  }
}

function isObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

function require(body: Record<string, unknown>, fields: string[], type: string): void {
  for (const name of fields) {
    if (!(name in body)) {
      throw new ProtocolError("missing-field", `${type} requires body field "${name}"`);
    }
  }
}

/** Structural per-type checks, the same rules the server applies. */
export function validateBody(type: MessageType, body: Record<string, unknown>): void {
  switch (type) {
    case "session.start":
      if (body["mode"] === "interview") {
        require(body, ["child_id"], type);
      } else {
        require(body, ["scenario_id"], type);
      }
      break;
    case "utterance.push": {
      require(body, ["speaker", "turn_index", "stage", "t_start", "t_end"], type);
      if (!("text" in body) && !("audio" in body)) {
        throw new ProtocolError("missing-field", `${type} requires "text" or "audio"`);
      }
      if (!Number.isInteger(body["turn_index"])) {
        throw new ProtocolError("malformed", `${type}: turn_index must be an integer`);
      }
      for (const key of ["t_start", "t_end"]) {
        if (!isFiniteNumber(body[key])) {
          throw new ProtocolError("malformed", `${type}: ${key} must be a number`);
        }
      }
      break;
    }
    case "interview.answer":
      require(body, ["question_id", "text"], type);
      break;
    case "stage.advance":
    case "agent.invoke":
    case "image.request":
    case "session.end": {
      const at = body["at"];
      if (at !== undefined && at !== null && !isFiniteNumber(at)) {
        throw new ProtocolError("malformed", `${type}: at must be a number`);
      }
      break;
    }
    case "advice.phase":
    case "advice.realtime":
      require(body, ["advice"], type);
      if (!isObject(body["advice"])) {
        throw new ProtocolError("malformed", `${type}: advice must be an object`);
      }
      break;
    case "stage.state":
      require(body, ["nodes"], type);
      if (!Array.isArray(body["nodes"])) {
        throw new ProtocolError("malformed", `${type}: nodes must be a list`);
      }
      break;
    case "agent.reply":
      require(body, ["utterance"], type);
      break;
    case "image.ready":
      require(body, ["image"], type);
      break;
    case "report.ready":
      require(body, ["report"], type);
      break;
    case "profile.updated":
      require(body, ["child_id", "version"], type);
      break;
    case "interview.question":
      if (!body["done"] && !("question" in body)) {
        throw new ProtocolError("missing-field", `${type} requires "question" unless done`);
      }
      break;
    case "error":
      require(body, ["code", "message"], type);
      break;
  }
}

const SERVER_TYPE_SET: ReadonlySet<string> = new Set(SERVER_TYPES);
const ALL_TYPE_SET: ReadonlySet<string> = new Set([...CLIENT_TYPES, ...SERVER_TYPES]);

/** Parse one frame received from the server. */
export function parseServerMessage(raw: string): WireMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (e) {
    throw new ProtocolError("malformed", `not valid JSON: ${(e as Error).message}`);
  }
  if (!isObject(doc)) {
    throw new ProtocolError("malformed", "frame must be a JSON object");
  }
  for (const name of ["type", "session_id", "seq"]) {
    if (!(name in doc)) {
      throw new ProtocolError("missing-field", `frame requires "${name}"`);
    }
  }
  const type = doc["type"];
  if (typeof type !== "string" || !ALL_TYPE_SET.has(type)) {
    throw new ProtocolError("unknown-type", `unknown message type ${JSON.stringify(type)}`);
  }
  if (!SERVER_TYPE_SET.has(type)) {
    throw new ProtocolError("unknown-type", `${type} is not a server message`);
  }
  const seq = doc["seq"];
  if (!Number.isInteger(seq) || (seq as number) < 0) {
    throw new ProtocolError("malformed", "seq must be a non-negative integer");
  }
  const sessionId = doc["session_id"];
  if (typeof sessionId !== "string" || sessionId.length === 0) {
    throw new ProtocolError("malformed", "session_id must be a non-empty string");
  }
  const body = doc["body"] ?? {};
  if (!isObject(body)) {
    throw new ProtocolError("malformed", "body must be an object");
  }
  validateBody(type as MessageType, body);
  return { type: type as MessageType, session_id: sessionId, seq: seq as number, body };
}

/** Serialize one frame for sending. Validates first so a bad gesture can
 * never leave the client. */
export function serializeClientMessage(msg: WireMessage): string {
  if (!(CLIENT_TYPES as readonly string[]).includes(msg.type)) {
    throw new ProtocolError("unknown-type", `${msg.type} is not a client message`);
  }
  validateBody(msg.type, msg.body);
  return JSON.stringify({
    type: msg.type,
    session_id: msg.session_id,
    seq: msg.seq,
    body: msg.body,
  });
}
