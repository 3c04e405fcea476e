/**
 * Wire records of the ground-control runtime: newline-delimited JSON,
 * schema-versioned telemetry frames one way, single-line commands the other.
 * This module is shared by the browser app and the bridge, so it must stay
 * free of DOM and node imports.
 */
export const SCHEMA_VERSION = 1;
/** Parse one wire line; throws on JSON errors, flags version mismatches. */
export function parseRecord(line) {
    const data = JSON.parse(line);
    if (data.v !== SCHEMA_VERSION) {
        return { kind: "version_mismatch", got: data.v };
    }
    if (data.kind === "ack") {
        return { kind: "ack", ack: data };
    }
    return { kind: "frame", frame: data };
}
export function encodeCommand(command) {
    return JSON.stringify(command);
}
/** Commands legal in a given flight phase (mirrors the runtime's gating). */
export function allowedCommands(phase) {
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
    buffer = "";
    push(chunk) {
        this.buffer += chunk;
        const lines = this.buffer.split("\n");
        this.buffer = lines.pop() ?? "";
        return lines.filter((line) => line.trim().length > 0);
    }
}
