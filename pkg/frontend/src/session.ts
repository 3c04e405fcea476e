/**
 * Console session state: bounded frame history, connection status, command
 * gating and pending acknowledgements. Pure state machine so the same code
 * is exercised head-less in tests and by the browser app. The console never
 * computes control actions; it only renders what the runtime reports.
 */

import { Ack, CommandName, TelemetryFrame, allowedCommands, parseRecord } from "./protocol.js";

export type ConnectionState = "connecting" | "live" | "reconnecting" | "version_mismatch" | "closed";

export interface SessionEvents {
  onFrame?: (frame: TelemetryFrame) => void;
  onStatus?: (state: ConnectionState) => void;
  onAck?: (ack: Ack) => void;
}

export class ConsoleSession {
  readonly capacity: number;
  private frames: TelemetryFrame[] = [];
  private start = 0;
  state: ConnectionState = "connecting";
  lastAck: Ack | null = null;
  pendingCommands = 0;
  private events: SessionEvents;

  constructor(capacity = 3000, events: SessionEvents = {}) {
    this.capacity = capacity;
    this.events = events;
  }

  get length(): number {
    return this.frames.length - this.start;
  }

  /** Latest frame, or null before the first one arrives. */
  get latest(): TelemetryFrame | null {
    return this.length ? this.frames[this.frames.length - 1] : null;
  }

  /** Phase shown to the operator: only what the runtime acknowledged. */
  get phase(): string {
    return this.latest?.phase ?? "unknown";
  }

  setState(state: ConnectionState): void {
    if (state !== this.state) {
      this.state = state;
      this.events.onStatus?.(state);
    }
  }

  /** Feed one wire line; returns false when the line demands disconnecting. */
  ingestLine(line: string): boolean {
    let record;
    try {
      record = parseRecord(line);
    } catch {
      return true; // tolerate a torn line mid-reconnect
    }
    if (record.kind === "version_mismatch") {
      this.setState("version_mismatch");
      return false;
    }
    if (record.kind === "ack") {
      this.lastAck = record.ack;
      this.pendingCommands = Math.max(0, this.pendingCommands - 1);
      this.events.onAck?.(record.ack);
      return true;
    }
    this.pushFrame(record.frame);
    return true;
  }

  pushFrame(frame: TelemetryFrame): void {
    this.frames.push(frame);
    if (this.length > this.capacity) {
      this.start += 1;
      if (this.start > this.capacity) {
        // amortized compaction keeps memory bounded over long sessions
        this.frames = this.frames.slice(this.start);
        this.start = 0;
      }
    }
    this.setState("live");
    this.events.onFrame?.(frame);
  }

  /** Frames in arrival order (bounded by the ring capacity). */
  history(): TelemetryFrame[] {
    return this.frames.slice(this.start);
  }

  /** Series extraction for the plots: [t[], value[]] for a channel picker. */
  series(pick: (frame: TelemetryFrame) => number): [number[], number[]] {
    const ts: number[] = [];
    const vs: number[] = [];
    for (let i = this.start; i < this.frames.length; i++) {
      ts.push(this.frames[i].t);
      vs.push(pick(this.frames[i]));
    }
    return [ts, vs];
  }

  commandAllowed(cmd: CommandName): boolean {
    return allowedCommands(this.phase).includes(cmd);
  }

  noteCommandSent(): void {
    this.pendingCommands += 1;
  }
}
