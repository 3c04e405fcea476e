import { describe, expect, it } from "vitest";

import { ConsoleSession } from "../src/session.js";
import { loadScript } from "./fixture.js";

function frameLine(t: number, phase: string, extra: Record<string, unknown> = {}): string {
  return JSON.stringify({
    v: 1,
    t,
    phase,
    alpha: 0,
    truth_com: [0, 0, 0],
    truth_euler: [0, 0, 0],
    est_com: [0, 0, 0],
    est_euler: [0, 0, 0],
    est_cov_diag: [],
    jet_thrust: [0, 0, 0, 0],
    jet_thrust_est: [0, 0, 0, 0],
    jet_cov_trace: [0, 0, 0, 0],
    jet_throttle: [0, 0, 0, 0],
    jet_rpm: [0, 0, 0, 0],
    jet_nis: [0, 0, 0, 0],
    ref_com: [0, 0, 0],
    tracking_error: [0, 0, 0],
    mpc_iterations: 0,
    mpc_status: "skipped",
    mpc_cost: 0,
    mpc_solve_ms: 0,
    contact: true,
    log_ok: true,
    shutdown_reason: null,
    ...extra,
  });
}

describe("ConsoleSession", () => {
  it("replays the recorded take-off: alpha ramp and phase transitions visible", () => {
    const session = new ConsoleSession();
    for (const line of loadScript()) {
      expect(session.ingestLine(line)).toBe(true);
    }
    const phases = new Set(session.history().map((f) => f.phase));
    expect(phases).toContain("Idle");
    expect(phases).toContain("Ramp");
    expect(phases).toContain("Airborne");
    const [, alphas] = session.series((f) => f.alpha);
    expect(Math.min(...alphas)).toBe(0);
    expect(Math.max(...alphas)).toBe(1);
    // alpha never decreases in the recorded ramp
    for (let i = 1; i < alphas.length; i++) expect(alphas[i]).toBeGreaterThanOrEqual(alphas[i - 1]);
    expect(session.state).toBe("live");
  });

  it("ring buffer stays bounded over long sessions", () => {
    const session = new ConsoleSession(100);
    for (let i = 0; i < 10000; i++) {
      session.ingestLine(frameLine(i * 0.1, "Airborne"));
    }
    expect(session.length).toBe(100);
    const history = session.history();
    expect(history[0].t).toBeCloseTo(990.0, 6);
    expect(history[history.length - 1].t).toBeCloseTo(999.9, 6);
  });

  it("version mismatch disables the session", () => {
    const session = new ConsoleSession();
    expect(session.ingestLine('{"v": 2, "t": 0}')).toBe(false);
    expect(session.state).toBe("version_mismatch");
  });

  it("renders only the acknowledged phase and gates commands", () => {
    const session = new ConsoleSession();
    expect(session.phase).toBe("unknown");
    session.ingestLine(frameLine(0.1, "Idle"));
    expect(session.commandAllowed("arm")).toBe(true);
    expect(session.commandAllowed("start_takeoff")).toBe(false);
    session.ingestLine(frameLine(0.2, "Spool"));
    expect(session.commandAllowed("start_takeoff")).toBe(true);
    session.ingestLine(frameLine(0.3, "Airborne"));
    expect(session.commandAllowed("arm")).toBe(false);
    expect(session.commandAllowed("abort")).toBe(true);
  });

  it("tracks pending commands against acks", () => {
    const acks: string[] = [];
    const session = new ConsoleSession(100, { onAck: (ack) => acks.push(ack.cmd) });
    session.noteCommandSent();
    expect(session.pendingCommands).toBe(1);
    session.ingestLine('{"v":1,"kind":"ack","cmd":"abort","accepted":true,"reason":null}');
    expect(session.pendingCommands).toBe(0);
    expect(acks).toEqual(["abort"]);
    expect(session.lastAck?.accepted).toBe(true);
  });

  it("duplicate aborts are harmless at the protocol level", () => {
    const session = new ConsoleSession();
    session.ingestLine(frameLine(0.1, "Shutdown", { shutdown_reason: "operator abort" }));
    expect(session.commandAllowed("abort")).toBe(true); // still allowed, idempotent
  });
});
