// client.ts - one live session over a WebSocket-like transport.
//
// The client owns three things the pure view fold cannot: the socket and
// its reconnect/resume dance, the client-side seq counter for outgoing
// frames, and the local transcript bookkeeping (the server never echoes
// pushed utterances back, so locally sent turns and the running turn_index
// live here). Server frames go through the SeqBuffer and then the fold;
// every user gesture sends exactly one frame or, when disabled, none.

import * as actions from "./actions.js";
import { parseServerMessage, serializeClientMessage, type WireMessage } from "./protocol.js";
import { SeqBuffer } from "./seqBuffer.js";
import {
  applyServerMessage,
  initialView,
  type SessionView,
} from "./viewModel.js";

/** The subset of the browser WebSocket surface the client needs; tests
 * substitute a scripted implementation. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "idle" | "connecting" | "open" | "reconnecting" | "closed";

export interface LocalTurn {
  turnIndex: number;
  speaker: string;
  text: string;
  tStart: number;
  tEnd: number;
  stage: string;
  seq: number; // the client frame that carried it, for error rollback
}

export interface ClientOptions {
  url: string; // ws endpoint, e.g. ws://host:port/ws
  sessionId: string;
  socketFactory: SocketFactory;
  token?: string;
  onChange?: (client: SessionClient) => void;
}

export class SessionClient {
  view: SessionView = initialView();
  status: ConnectionStatus = "idle";
  localTurns: LocalTurn[] = [];

  private readonly opts: ClientOptions;
  private socket: SocketLike | null = null;
  private buffer = new SeqBuffer(0);
  private outSeq = 0;
  private nextTurnIndex = 0;
  private everConnected = false;

  constructor(opts: ClientOptions) {
    this.opts = opts;
  }

  // -- connection -----------------------------------------------------------

  private resumeUrl(): string {
    const params = new URLSearchParams();
    if (this.everConnected) {
      params.set("session_id", this.opts.sessionId);
      params.set("last_seq", String(this.buffer.lastReleased));
    }
    if (this.opts.token !== undefined) {
      params.set("token", this.opts.token);
    }
    const query = params.toString();
    return query ? `${this.opts.url}?${query}` : this.opts.url;
  }

  connect(): void {
    this.status = this.everConnected ? "reconnecting" : "connecting";
    this.notify();
    const socket = this.opts.socketFactory(this.resumeUrl());
    this.socket = socket;
    socket.onopen = () => {
      this.status = "open";
      this.everConnected = true;
      this.notify();
    };
    socket.onmessage = (event) => this.receive(event.data);
    socket.onclose = () => {
      this.socket = null;
      if (this.status !== "closed") {
        this.status = "reconnecting";
        this.notify();
      }
    };
  }

  close(): void {
    this.status = "closed";
    this.socket?.close();
    this.socket = null;
    this.notify();
  }

  private receive(data: string): void {
    const frame = parseServerMessage(data);
    if (frame.session_id !== this.opts.sessionId) {
      return; // not ours; a shared channel could multiplex sessions
    }
    for (const msg of this.buffer.push(frame)) {
      this.apply(msg);
    }
    this.notify();
  }

  private apply(msg: WireMessage): void {
    this.view = applyServerMessage(this.view, msg);
    if (msg.type === "agent.reply") {
      // The agent consumed a turn index on the server; stay in step.
      const u = msg.body["utterance"] as Record<string, unknown> | undefined;
      const turnIndex = typeof u?.["turn_index"] === "number" ? (u["turn_index"] as number) : null;
      if (turnIndex !== null && turnIndex >= this.nextTurnIndex) {
        this.nextTurnIndex = turnIndex + 1;
      }
    } else if (msg.type === "error") {
      // A rejected frame committed nothing; roll back the optimistic turn.
      const echo = msg.body["echo_seq"];
      if (typeof echo === "number") {
        const i = this.localTurns.findIndex((t) => t.seq === echo);
        if (i >= 0) {
          const [dropped] = this.localTurns.splice(i, 1);
          if (dropped && dropped.turnIndex < this.nextTurnIndex) {
            this.nextTurnIndex = dropped.turnIndex;
          }
        }
      }
    }
  }

  private notify(): void {
    this.opts.onChange?.(this);
  }

  // -- outgoing frames ------------------------------------------------------

  private nextSeq = (): number => {
    this.outSeq += 1;
    return this.outSeq;
  };

  /** Seq numbers must stay gapless, so never build a frame (which consumes
   * the next seq) unless the socket can actually carry it. */
  private ready(): boolean {
    return this.socket !== null && this.status === "open";
  }

  private send(msg: WireMessage | null): boolean {
    if (msg === null || !this.ready()) {
      return false;
    }
    this.socket!.send(serializeClientMessage(msg));
    return true;
  }

  /** The transcript the screen shows: local sends merged with agent turns. */
  transcript(): Array<LocalTurn | { turnIndex: number; speaker: string; text: string }> {
    const merged = [
      ...this.localTurns,
      ...this.view.agent.turns.map((t) => ({ ...t, seq: -1 })),
    ];
    merged.sort((a, b) => a.turnIndex - b.turnIndex);
    return merged;
  }

  // -- gestures: each sends exactly one frame, or none when disabled --------

  start(opts: actions.StartOptions): boolean {
    if (!this.ready()) return false;
    return this.send(actions.startSession(this.opts.sessionId, this.nextSeq, opts));
  }

  sendUtterance(input: {
    speaker: "parent" | "child";
    text?: string;
    audio?: string;
    tStart: number;
    tEnd: number;
  }): boolean {
    if (!this.ready()) return false;
    const stage = this.view.strip?.active;
    if (!stage) return false;
    const turnIndex = this.nextTurnIndex;
    const msg = actions.pushUtterance(this.view, this.opts.sessionId, this.nextSeq, {
      ...input,
      turnIndex,
      stage,
    });
    if (msg === null || !this.send(msg)) return false;
    this.nextTurnIndex = turnIndex + 1;
    this.localTurns.push({
      turnIndex,
      speaker: input.speaker,
      text: input.text ?? `[audio: ${input.audio ?? ""}]`,
      tStart: input.tStart,
      tEnd: input.tEnd,
      stage,
      seq: msg.seq,
    });
    this.notify();
    return true;
  }

  advance(at?: number): boolean {
    if (!this.ready()) return false;
    return this.send(actions.advanceStage(this.view, this.opts.sessionId, this.nextSeq, at));
  }

  invokeAgent(at?: number): boolean {
    if (!this.ready()) return false;
    return this.send(actions.invokeAgent(this.view, this.opts.sessionId, this.nextSeq, at));
  }

  requestImage(at?: number): boolean {
    if (!this.ready()) return false;
    return this.send(actions.requestImage(this.view, this.opts.sessionId, this.nextSeq, at));
  }

  answerInterview(text: string): boolean {
    if (!this.ready()) return false;
    return this.send(actions.answerInterview(this.view, this.opts.sessionId, this.nextSeq, text));
  }

  end(at?: number): boolean {
    if (!this.ready()) return false;
    return this.send(actions.endSession(this.opts.sessionId, this.nextSeq, at));
  }
}
