/**
 * Operator console page: subscribes to the bridge stream, maintains the
 * session ring buffer, renders plots at display rate and sends commands.
 * Strictly read/command: every number on screen came from the runtime.
 */
import { encodeCommand } from "./protocol.js";
import { ConsoleSession } from "./session.js";
import { drawPlot } from "./plots.js";
const session = new ConsoleSession(3000, {
    onStatus: (state) => updateStatusBadge(state),
    onAck: (ack) => {
        if (!ack.accepted || ack.reason) {
            toast(`${ack.cmd}: ${ack.accepted ? "accepted" : "rejected"}${ack.reason ? " - " + ack.reason : ""}`);
        }
    },
});
function el(id) {
    return document.getElementById(id);
}
function toast(message) {
    const box = el("toast");
    box.textContent = message;
    box.classList.add("visible");
    setTimeout(() => box.classList.remove("visible"), 4000);
}
function updateStatusBadge(state) {
    const badge = el("conn");
    badge.textContent = state;
    badge.className = `badge ${state === "live" ? "ok" : state === "version_mismatch" ? "bad" : "warn"}`;
    el("version-banner").style.display = state === "version_mismatch" ? "block" : "none";
}
let source = null;
let stopped = false;
function connect() {
    if (stopped)
        return;
    session.setState("connecting");
    source = new EventSource("/stream");
    source.onmessage = (event) => {
        if (!session.ingestLine(event.data)) {
            // schema mismatch: stop plotting, keep the banner up
            source?.close();
        }
    };
    source.addEventListener("bridge", (event) => {
        const status = JSON.parse(event.data).status;
        if (status === "upstream_lost")
            session.setState("reconnecting");
    });
    source.onerror = () => {
        session.setState("reconnecting");
        // EventSource retries by itself; nothing else to do
    };
}
async function sendCommand(cmd, dz) {
    session.noteCommandSent();
    try {
        const response = await fetch("/command", { method: "POST", body: encodeCommand({ cmd, dz }) });
        if (!response.ok)
            toast(`command failed: HTTP ${response.status}`);
    }
    catch (err) {
        toast(`command failed: ${err}`);
    }
}
function wireButtons() {
    el("btn-arm").onclick = () => sendCommand("arm");
    el("btn-takeoff").onclick = () => sendCommand("start_takeoff");
    el("btn-abort").onclick = () => sendCommand("abort");
    el("btn-setref").onclick = () => {
        const dz = parseFloat(el("dz").value || "0");
        if (isFinite(dz) && dz !== 0)
            sendCommand("set_reference", dz);
    };
}
function refreshButtons() {
    const gates = [
        ["btn-arm", "arm"],
        ["btn-takeoff", "start_takeoff"],
        ["btn-setref", "set_reference"],
        ["btn-abort", "abort"],
    ];
    for (const [id, cmd] of gates) {
        el(id).disabled = !session.commandAllowed(cmd) || session.state === "version_mismatch";
    }
}
let lastShutdownReason = null;
function render() {
    const latest = session.latest;
    if (latest && session.state !== "version_mismatch") {
        el("phase").textContent = latest.phase;
        el("phase").className = `badge ${latest.phase === "Shutdown" ? "bad" : latest.phase === "Airborne" ? "ok" : "warn"}`;
        el("alpha").textContent = latest.alpha.toFixed(3);
        el("tsim").textContent = latest.t.toFixed(1) + " s";
        el("contact").textContent = latest.contact ? "ground" : "airborne";
        if (latest.shutdown_reason && latest.shutdown_reason !== lastShutdownReason) {
            lastShutdownReason = latest.shutdown_reason;
            toast(`SHUTDOWN: ${latest.shutdown_reason}`);
        }
        drawPlot(el("plot-com"), "CoM position vs reference [m]", [
            { label: "x", color: "#e66", points: session.series((f) => f.truth_com[0]) },
            { label: "y", color: "#6d6", points: session.series((f) => f.truth_com[1]) },
            { label: "z", color: "#69e", points: session.series((f) => f.truth_com[2]) },
            { label: "x ref", color: "#a44", points: session.series((f) => f.ref_com[0]), dashed: true },
            { label: "y ref", color: "#4a4", points: session.series((f) => f.ref_com[1]), dashed: true },
            { label: "z ref", color: "#46a", points: session.series((f) => f.ref_com[2]), dashed: true },
        ]);
        const deg = 180 / Math.PI;
        drawPlot(el("plot-euler"), "Base orientation [deg]", [
            { label: "yaw", color: "#e66", points: session.series((f) => f.est_euler[0] * deg) },
            { label: "pitch", color: "#6d6", points: session.series((f) => f.est_euler[1] * deg) },
            { label: "roll", color: "#69e", points: session.series((f) => f.est_euler[2] * deg) },
        ]);
        drawPlot(el("plot-thrust"), "Per-jet thrust: estimate vs truth [N]", [
            { label: "T1", color: "#e66", points: session.series((f) => f.jet_thrust_est[0]) },
            { label: "T2", color: "#6d6", points: session.series((f) => f.jet_thrust_est[1]) },
            { label: "T3", color: "#69e", points: session.series((f) => f.jet_thrust_est[2]) },
            { label: "T4", color: "#ea6", points: session.series((f) => f.jet_thrust_est[3]) },
            { label: "T1 truth", color: "#a44", points: session.series((f) => f.jet_thrust[0]), dashed: true },
            { label: "T2 truth", color: "#4a4", points: session.series((f) => f.jet_thrust[1]), dashed: true },
            { label: "T3 truth", color: "#46a", points: session.series((f) => f.jet_thrust[2]), dashed: true },
            { label: "T4 truth", color: "#a84", points: session.series((f) => f.jet_thrust[3]), dashed: true },
        ]);
        drawPlot(el("plot-alpha"), "Alpha and throttle", [
            { label: "alpha", color: "#fd5", points: session.series((f) => f.alpha) },
            { label: "u1/100", color: "#e66", points: session.series((f) => f.jet_throttle[0] / 100) },
            { label: "u2/100", color: "#6d6", points: session.series((f) => f.jet_throttle[1] / 100) },
            { label: "u3/100", color: "#69e", points: session.series((f) => f.jet_throttle[2] / 100) },
            { label: "u4/100", color: "#ea6", points: session.series((f) => f.jet_throttle[3] / 100) },
        ]);
    }
    refreshButtons();
}
wireButtons();
connect();
setInterval(render, 100); // >= 10 Hz refresh
