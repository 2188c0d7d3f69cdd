// seqBuffer.ts - re-order server frames into contiguous seq order.
//
// The server numbers its frames 1, 2, 3, ... per session. Transports can
// deliver them out of order across a reconnect, so the buffer holds early
// arrivals until the gap closes and releases everything in order. Error
// frames carry seq 0, are not part of the numbered stream, and pass through
// immediately.

import type { WireMessage } from "./protocol.js";

export class SeqBuffer {
  private next: number;
  private pending = new Map<number, WireMessage>();

  constructor(lastSeq = 0) {
    this.next = lastSeq + 1;
  }

  /** Highest seq released so far. */
  get lastReleased(): number {
    return this.next - 1;
  }

  /** How many frames are parked waiting for a gap to close. */
  get pendingCount(): number {
    return this.pending.size;
  }

  /** Feed one frame; returns every frame now ready, in order. Duplicates
   * and frames at or below the released watermark are dropped. */
  push(msg: WireMessage): WireMessage[] {
    if (msg.seq === 0) {
      return [msg]; // transient error frame, outside the numbered stream
    }
    if (msg.seq < this.next || this.pending.has(msg.seq)) {
      return []; // replayed duplicate after a resume
    }
    this.pending.set(msg.seq, msg);
    const ready: WireMessage[] = [];
    while (this.pending.has(this.next)) {
      ready.push(this.pending.get(this.next)!);
      this.pending.delete(this.next);
      this.next += 1;
    }
    return ready;
  }
}
