/**
 * Secondary acceptance: the console connects to a (scripted) take-off run,
 * observes the alpha ramp and phase transitions, and a manual abort drives
 * the runtime to Shutdown.
 */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { Bridge } from "../src/bridge.js";
import { ConsoleSession } from "../src/session.js";
import { RuntimeFixture } from "./fixture.js";

let fixture: RuntimeFixture;
let bridge: Bridge;
let port: number;

beforeEach(async () => {
  fixture = new RuntimeFixture({ frameIntervalMs: 5 });
  const gcsPort = await fixture.start();
  bridge = new Bridge({ gcsHost: "127.0.0.1", gcsPort, httpPort: 0, publicDir: "public" });
  port = await bridge.start();
});

afterEach(() => {
  bridge.stop();
  fixture.stop();
});

async function streamInto(session: ConsoleSession, until: (s: ConsoleSession) => boolean, timeoutMs = 8000): Promise<void> {
  const response = await fetch(`http://127.0.0.1:${port}/stream`);
  expect(response.ok).toBe(true);
  fixture.play(); // the script starts only once a subscriber is listening
  const reader = response.body!.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline && !until(session)) {
    const { value, done } = await Promise.race([
      reader.read(),
      new Promise<{ value: undefined; done: boolean }>((resolve) => setTimeout(() => resolve({ value: undefined, done: false }), 200)),
    ]);
    if (done) break;
    if (!value) continue;
    buffer += decoder.decode(value, { stream: true });
    const events = buffer.split("\n\n");
    buffer = events.pop() ?? "";
    for (const event of events) {
      if (event.startsWith("event: bridge")) continue;
      for (const line of event.split("\n")) {
        if (line.startsWith("data: ")) session.ingestLine(line.slice(6));
      }
    }
  }
  await reader.cancel().catch(() => {});
}

describe("console against a scripted take-off run", () => {
  it("frames flow within a second and carry the alpha ramp and phases", async () => {
    const session = new ConsoleSession();
    const started = Date.now();
    await streamInto(session, (s) => s.length >= 1, 2000);
    expect(Date.now() - started).toBeLessThan(1500);
    await streamInto(session, (s) => {
      const phases = new Set(s.history().map((f) => f.phase));
      return phases.has("Airborne") && Math.max(0, ...s.history().map((f) => f.alpha)) >= 1;
    });
    const phases = session.history().map((f) => f.phase);
    expect(phases).toContain("Idle");
    expect(phases).toContain("Spool");
    expect(phases).toContain("Ramp");
    expect(phases).toContain("Airborne");
    const alphas = session.history().map((f) => f.alpha);
    expect(Math.max(...alphas)).toBe(1);
    expect(session.state).toBe("live");
  });

  it("manual abort drives the runtime to Shutdown in the following frames", async () => {
    const session = new ConsoleSession();
    await streamInto(session, (s) => s.phase === "Ramp");
    const response = await fetch(`http://127.0.0.1:${port}/command`, {
      method: "POST",
      body: JSON.stringify({ cmd: "abort" }),
    });
    expect(response.status).toBe(202);
    await streamInto(session, (s) => s.phase === "Shutdown");
    expect(fixture.receivedCommands.some((c) => c.cmd === "abort")).toBe(true);
    expect(session.phase).toBe("Shutdown");
    expect(session.latest?.shutdown_reason).toBe("operator abort");
    expect(Math.max(...session.latest!.jet_throttle)).toBe(0);
  });

  it("serves the single-page app shell", async () => {
    const response = await fetch(`http://127.0.0.1:${port}/`);
    expect(response.ok).toBe(true);
    const html = await response.text();
    expect(html).toContain("jetstack console");
    expect(html).toContain("/js/app.js");
  });

  it("command endpoint reports when the runtime is unreachable", async () => {
    fixture.stop();
    await new Promise((resolve) => setTimeout(resolve, 150));
    const response = await fetch(`http://127.0.0.1:${port}/command`, {
      method: "POST",
      body: JSON.stringify({ cmd: "abort" }),
    });
    expect(response.status).toBe(503);
  });
});
