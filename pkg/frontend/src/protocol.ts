/**
 * Wire records of the ground-control runtime: newline-delimited JSON,
 * schema-versioned telemetry frames one way, single-line commands the other.
 * This module is shared by the browser app and the bridge, so it must stay
 * free of DOM and node imports.
 */

export const SCHEMA_VERSION = 1;

export interface TelemetryFrame {
  v: number;
  t: number;
  phase: string;
  alpha: number;
  truth_com: number[];
  truth_euler: number[];
  est_com: number[];
  est_euler: number[];
  est_cov_diag: number[];
  jet_thrust: number[];
  jet_thrust_est: number[];
  jet_cov_trace: number[];
  jet_throttle: number[];
  jet_rpm: number[];
  jet_nis: number[];
  ref_com: number[];
  tracking_error: number[];
  mpc_iterations: number;
  mpc_status: string;
  mpc_cost: number;
  mpc_solve_ms: number;
  contact: boolean;
  log_ok: boolean;
  shutdown_reason: string | null;
}

export interface Ack {
  v: number;
  kind: "ack";
  cmd: string;
  accepted: boolean;
  reason: string | null;
}

export type CommandName = "arm" | "start_takeoff" | "set_reference" | "abort";

export interface Command {
  cmd: CommandName;
  dz?: number;
}

export type Record = { kind: "frame"; frame: TelemetryFrame } | { kind: "ack"; ack: Ack } | { kind: "version_mismatch"; got: unknown };

/** Parse one wire line; throws on JSON errors, flags version mismatches. */
export function parseRecord(line: string): Record {
  const data = JSON.parse(line);
  if (data.v !== SCHEMA_VERSION) {
    return { kind: "version_mismatch", got: data.v };
  }
  if (data.kind === "ack") {
    return { kind: "ack", ack: data as Ack };
  }
  return { kind: "frame", frame: data as TelemetryFrame };
}

export function encodeCommand(command: Command): string {
  return JSON.stringify(command);
}

/** Commands legal in a given flight phase (mirrors the runtime's gating). */
export function allowedCommands(phase: string): CommandName[] {
  switch (phase) {
    case "Idle":
      return ["arm", "abort"];
    case "Spool":
      return ["start_takeoff", "set_reference", "abort"];
    case "Ramp":
    case "Airborne":
      return ["set_reference", "abort"];
    default:
      return ["abort"];
  }
}

/** Incremental newline-delimited decoder for stream transports. */
export class LineDecoder {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const lines = this.buffer.split("\n");
    this.buffer = lines.pop() ?? "";
    return lines.filter((line) => line.trim().length > 0);
  }
}
