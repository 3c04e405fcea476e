import { describe, expect, it } from "vitest";

import { LineDecoder, allowedCommands, encodeCommand, parseRecord } from "../src/protocol.js";
import { loadScript } from "./fixture.js";

describe("parseRecord", () => {
  it("parses recorded frames from a real run", () => {
    for (const line of loadScript()) {
      const record = parseRecord(line);
      expect(record.kind).toBe("frame");
      if (record.kind === "frame") {
        expect(record.frame.t).toBeTypeOf("number");
        expect(record.frame.jet_thrust).toHaveLength(4);
        expect(record.frame.truth_com).toHaveLength(3);
      }
    }
  });

  it("flags schema version mismatches", () => {
    const record = parseRecord('{"v": 99, "t": 0}');
    expect(record.kind).toBe("version_mismatch");
  });

  it("recognises acks", () => {
    const record = parseRecord('{"v":1,"kind":"ack","cmd":"abort","accepted":true,"reason":null}');
    expect(record.kind).toBe("ack");
    if (record.kind === "ack") expect(record.ack.cmd).toBe("abort");
  });
});

describe("encodeCommand", () => {
  it("produces single-line JSON the runtime accepts", () => {
    expect(JSON.parse(encodeCommand({ cmd: "set_reference", dz: 1.0 }))).toEqual({ cmd: "set_reference", dz: 1.0 });
    expect(encodeCommand({ cmd: "abort" })).not.toContain("\n");
  });
});

describe("allowedCommands", () => {
  it("mirrors the runtime phase gating", () => {
    expect(allowedCommands("Idle")).toEqual(["arm", "abort"]);
    expect(allowedCommands("Spool")).toContain("start_takeoff");
    expect(allowedCommands("Airborne")).not.toContain("arm");
    expect(allowedCommands("Shutdown")).toEqual(["abort"]);
  });
});

describe("LineDecoder", () => {
  it("reassembles split lines", () => {
    const decoder = new LineDecoder();
    expect(decoder.push('{"a":')).toEqual([]);
    expect(decoder.push('1}\n{"b":2}\n{"c"')).toEqual(['{"a":1}', '{"b":2}']);
    expect(decoder.push(":3}\n")).toEqual(['{"c":3}']);
  });
});
