/**
 * Scripted runtime fixture: a TCP server that speaks the ground-control
 * telemetry/command protocol from a canned frame script (recorded from a
 * real take-off run). An abort command flips the remaining frames to the
 * Shutdown phase, mirroring the runtime's behaviour.
 */

import * as fs from "node:fs";
import * as net from "node:net";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const here = path.dirname(fileURLToPath(import.meta.url));

export function loadScript(): string[] {
  const raw = fs.readFileSync(path.join(here, "takeoff_frames.ndjson"), "utf-8");
  return raw.split("\n").filter((line) => line.trim().length > 0);
}

export interface FixtureOptions {
  frameIntervalMs?: number;
  script?: string[];
}

export class RuntimeFixture {
  readonly receivedCommands: { cmd: string; dz?: number }[] = [];
  private server: net.Server;
  private sockets = new Set<net.Socket>();
  private timer: NodeJS.Timeout | null = null;
  private script: string[];
  private cursor = 0;
  private aborted = false;
  private playing = false;
  private frameIntervalMs: number;
  port = 0;

  constructor(options: FixtureOptions = {}) {
    this.script = options.script ?? loadScript();
    this.frameIntervalMs = options.frameIntervalMs ?? 10;
    this.server = net.createServer((socket) => {
      this.sockets.add(socket);
      socket.on("close", () => this.sockets.delete(socket));
      socket.on("error", () => socket.destroy());
      let buffer = "";
      socket.on("data", (chunk) => {
        buffer += chunk.toString("utf-8");
        let idx;
        while ((idx = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, idx);
          buffer = buffer.slice(idx + 1);
          if (!line.trim()) continue;
          const command = JSON.parse(line);
          this.receivedCommands.push(command);
          if (command.cmd === "abort") this.aborted = true;
          socket.write(
            JSON.stringify({ v: 1, kind: "ack", cmd: command.cmd, accepted: true, reason: null }) + "\n",
          );
        }
      });
    });
  }

  async start(): Promise<number> {
    await new Promise<void>((resolve) => this.server.listen(0, "127.0.0.1", resolve));
    const address = this.server.address();
    this.port = typeof address === "object" && address ? address.port : 0;
    this.timer = setInterval(() => this.emitFrame(), this.frameIntervalMs);
    return this.port;
  }

  play(): void {
    this.playing = true;
  }

  private emitFrame(): void {
    if (!this.playing || this.cursor >= this.script.length) return;
    let line = this.script[this.cursor++];
    if (this.aborted) {
      const frame = JSON.parse(line);
      frame.phase = "Shutdown";
      frame.shutdown_reason = "operator abort";
      frame.jet_throttle = [0, 0, 0, 0];
      line = JSON.stringify(frame);
    }
    for (const socket of this.sockets) {
      socket.write(line + "\n");
    }
  }

  get finished(): boolean {
    return this.cursor >= this.script.length;
  }

  stop(): void {
    if (this.timer) clearInterval(this.timer);
    for (const socket of this.sockets) socket.destroy();
    this.server.close();
  }
}
