"""Ground-control runtime: multi-rate loop, flight phases, telemetry, commands.

The loop is driven by the simulated clock (tick counts, never wall time), so
headless runs are deterministic: sim at 1 kHz, joint reference application at
1 kHz, pose estimation at 200 Hz, thrust estimation at 100 Hz, MPC and
schedule advance at 10 Hz. Telemetry fans out through non-blocking sinks
(drop-oldest under backpressure); operator commands enter through a single
queue drained at MPC boundaries, keeping the phase machine single-writer.
"""

from __future__ import annotations

import enum
import json
import queue
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .config import (
    build_contact_params,
    build_jet_coefficients,
    build_mpc_params,
    build_noise_config,
    build_reference,
    build_robot_model,
    build_schedule,
    load_config,
)
from .errors import ControllerFailure, SimulationFault, SingularityError
from .geometry import quat_to_euler_zyx, quat_to_matrix
from .jets import ThrottleCommand
from .model import CentroidalState, JointConfig, world_inertia
from .mpc import (
    FlightPhase,
    MpcController,
    MpcDiagnostics,
    MpcState,
    ReferenceTrajectory,
    TakeoffSchedule,
    advance_schedule,
    interpolate_joint_reference,
)
from .pose_estimation import PoseEstimator, estimated_com
from .sim import Simulator, com_position, ground_contact_flag
from .telemetry import FlightLog, TelemetryFrame
from .thrust_estimation import ThrustEstimator, initial_thrust_belief

MPC_DIV = 100  # 10 Hz
THRUST_DIV = 10  # 100 Hz
POSE_DIV = 5  # 200 Hz
SHUTDOWN_RAMP_S = 1.0


class _RunEnded(Exception):
    def __init__(self, reason: str | None):
        super().__init__(reason)
        self.reason = reason


class CommandKind(enum.Enum):
    ARM = "arm"
    START_TAKEOFF = "start_takeoff"
    SET_REFERENCE = "set_reference"
    ABORT = "abort"


@dataclass(frozen=True)
class OperatorCommand:
    kind: CommandKind
    dz: float = 0.0
    t_received: float = 0.0


@dataclass(frozen=True)
class CommandResult:
    accepted: bool
    reason: str | None
    phase: FlightPhase


def handle_command(cmd: OperatorCommand, schedule: TakeoffSchedule) -> tuple[CommandResult, TakeoffSchedule]:
    """Apply the phase-machine rules; rejected commands leave the schedule alone."""
    phase = schedule.phase
    if cmd.kind is CommandKind.ABORT:
        if phase is FlightPhase.SHUTDOWN:
            return CommandResult(True, "already shutting down", phase), schedule
        new = schedule.with_phase(FlightPhase.SHUTDOWN, reason="operator abort")
        return CommandResult(True, None, new.phase), new
    if cmd.kind is CommandKind.ARM:
        if phase is not FlightPhase.IDLE:
            return CommandResult(False, f"Arm only valid from Idle (now {phase.value})", phase), schedule
        new = schedule.with_phase(FlightPhase.SPOOL)
        return CommandResult(True, None, new.phase), new
    if cmd.kind is CommandKind.START_TAKEOFF:
        if phase is not FlightPhase.SPOOL:
            return CommandResult(False, f"StartTakeoff requires an armed robot (now {phase.value})", phase), schedule
        new = schedule.with_phase(FlightPhase.RAMP)
        return CommandResult(True, None, new.phase), new
    if cmd.kind is CommandKind.SET_REFERENCE:
        if phase in (FlightPhase.IDLE, FlightPhase.SHUTDOWN):
            return CommandResult(False, f"SetReference not available in {phase.value}", phase), schedule
        return CommandResult(True, None, phase), schedule
    return CommandResult(False, f"unknown command {cmd.kind}", phase), schedule


@dataclass
class RunReport:
    final_phase: str
    peak_altitude: float
    tracking_mae: list[float]
    orientation_mae_deg: float
    shutdown_reason: str | None
    duration_s: float
    wall_time_s: float
    counters: dict
    log_path: str | None

    def to_dict(self) -> dict:
        def finite(value, digits):
            return round(value, digits) if np.isfinite(value) else None

        return {
            "final_phase": self.final_phase,
            "peak_altitude": round(self.peak_altitude, 4),
            "tracking_mae": [finite(v, 4) for v in self.tracking_mae],
            "orientation_mae_deg": finite(self.orientation_mae_deg, 3),
            "shutdown_reason": self.shutdown_reason,
            "duration_s": round(self.duration_s, 3),
            "wall_time_s": round(self.wall_time_s, 2),
            "counters": self.counters,
            "log_path": self.log_path,
        }


class FlightRuntime:
    """Owns the scheduler loop and the phase machine (single writer)."""

    def __init__(
        self,
        sim: Simulator,
        pose_estimator: PoseEstimator,
        thrust_estimator: ThrustEstimator,
        controller: MpcController,
        schedule: TakeoffSchedule,
        reference: ReferenceTrajectory,
        mae_window: tuple[float, float] | None = None,
        wall_clock_diagnostics: bool = False,
    ):
        self.sim = sim
        self.pose = pose_estimator
        self.thrust = thrust_estimator
        self.controller = controller
        self.schedule = schedule
        self.reference = reference
        self.mae_window = mae_window
        self.wall_clock_diagnostics = wall_clock_diagnostics

        self.tick = 0
        self.throttle = ThrottleCommand.zero()
        self.joint_target_prev = sim.state.q.angles.copy()
        self.joint_target_next = sim.state.q.angles.copy()
        self.last_diag = MpcDiagnostics()
        self.commands: "queue.Queue[OperatorCommand]" = queue.Queue()
        self.scripted_events: list[OperatorCommand] = []
        self._scripted_cursor = 0
        self.sinks: list = []
        self.command_log: list[tuple[float, str, bool, str | None]] = []
        self._shutdown_entered: float | None = None
        self._throttle_at_shutdown = np.zeros(4)
        self._last_pose_time = 0.0
        self._contact = True
        self._last_rpm = np.zeros(4)
        # report accumulators
        self.counters = {"throttle_boundaries": 0, "joint_ref_updates": 0, "pose_updates": 0, "thrust_updates": 0}
        self._peak_altitude = 0.0
        self._initial_com_z = com_position(sim.state, sim.model)[2]
        self._mae_sum = np.zeros(3)
        self._mae_euler_sum = 0.0
        self._mae_count = 0

    # --- wiring ---

    def add_sink(self, sink) -> None:
        """Sink: callable(frame) -> None; must never block."""
        self.sinks.append(sink)

    def submit_command(self, cmd: OperatorCommand) -> CommandResult:
        """Thread-safe; the command is applied at the next MPC boundary."""
        self.commands.put(cmd)
        return CommandResult(True, "queued", self.schedule.phase)

    def script_events(self, events: list[OperatorCommand]) -> None:
        self.scripted_events = sorted(events, key=lambda e: e.t_received)
        self._scripted_cursor = 0

    # --- estimates ---

    def _estimate_state(self) -> MpcState:
        base = self.pose.state
        model = self.sim.model
        rot = quat_to_matrix(base.orientation)
        omega_world = rot @ base.ang_velocity
        r_c = rot @ model.com_offset
        com = base.position + r_c
        v_com = base.lin_velocity + np.cross(omega_world, r_c)
        centroidal = CentroidalState(
            com_position=com,
            lin_momentum=model.mass * v_com,
            euler_zyx=quat_to_euler_zyx(base.orientation),
            ang_momentum=world_inertia(model, rot) @ omega_world,
        )
        jets = tuple(
            type(self.sim.state.jets[0])(
                thrust=float(np.clip(self.thrust.estimates[i], 0.0, 250.0)),
                thrust_rate=float(self.thrust.beliefs[i].mean[1]),
            )
            for i in range(4)
        )
        # joint encoders read truth directly
        return MpcState(centroidal, jets, JointConfig(self.sim.state.q.angles))

    # --- the loop ---

    def _process_commands(self, t_now: float) -> None:
        while self._scripted_cursor < len(self.scripted_events) and self.scripted_events[self._scripted_cursor].t_received <= t_now + 1e-9:
            self._apply_command(self.scripted_events[self._scripted_cursor], t_now)
            self._scripted_cursor += 1
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                break
            self._apply_command(cmd, t_now)

    def _apply_command(self, cmd: OperatorCommand, t_now: float) -> CommandResult:
        result, new_schedule = handle_command(cmd, self.schedule)
        if result.accepted and cmd.kind is CommandKind.SET_REFERENCE:
            self.reference = self.reference.offset_z(cmd.dz, from_time=t_now)
        self._set_schedule(new_schedule, t_now)
        self.command_log.append((t_now, cmd.kind.value, result.accepted, result.reason))
        return result

    def _set_schedule(self, schedule: TakeoffSchedule, t_now: float) -> None:
        if schedule.phase is FlightPhase.SHUTDOWN and self._shutdown_entered is None:
            self._shutdown_entered = t_now
            self._throttle_at_shutdown = self.throttle.u.copy()
        self.schedule = schedule

    def _shutdown_throttle(self, t_now: float) -> ThrottleCommand:
        elapsed = t_now - (self._shutdown_entered if self._shutdown_entered is not None else t_now)
        scale = max(0.0, 1.0 - elapsed / SHUTDOWN_RAMP_S)
        return ThrottleCommand(self._throttle_at_shutdown * scale)

    def step(self) -> TelemetryFrame:
        """One 1 ms scheduler tick."""
        t_now = self.sim.state.time
        model = self.sim.model

        if self.tick % MPC_DIV == 0:
            self._process_commands(t_now)
            estimate = self._estimate_state()
            self.schedule = self._advance_schedule_safe(estimate, t_now)
            if self.schedule.phase is FlightPhase.SHUTDOWN:
                new_throttle = self._shutdown_throttle(t_now)
                self.joint_target_prev = self.joint_target_next
                diag = MpcDiagnostics(qp_status="shutdown_ramp")
                self.last_diag = diag
            else:
                started = time.perf_counter()
                try:
                    new_throttle, joint_target, diag = self.controller.mpc_step(
                        estimate,
                        self.schedule,
                        self.reference,
                        t_now,
                        estimate_age=t_now - self._last_pose_time,
                    )
                except (SingularityError, ControllerFailure) as exc:
                    self._set_schedule(
                        self.schedule.with_phase(FlightPhase.SHUTDOWN, reason=str(exc)), t_now
                    )
                    new_throttle = self._shutdown_throttle(t_now)
                    joint_target = self.joint_target_next
                    diag = MpcDiagnostics(qp_status="controller_error", error=str(exc))
                if self.wall_clock_diagnostics:
                    diag.solve_time = time.perf_counter() - started
                else:
                    diag.solve_time = 0.0
                self.joint_target_prev = self.joint_target_next
                self.joint_target_next = joint_target
                self.last_diag = diag
            self.throttle = new_throttle
            self.counters["throttle_boundaries"] += 1

        # joint reference interpolation at full rate
        within = (self.tick % MPC_DIV) * self.sim.dt_sim
        joint_ref = interpolate_joint_reference(self.joint_target_prev, self.joint_target_next, within)
        self.counters["joint_ref_updates"] += 1

        state, batch = self.sim.step(self.throttle, joint_ref)
        self._contact = ground_contact_flag(state)

        if batch.ft is not None:
            self.thrust.step(self.throttle.u, batch.ft, batch.rpm)
            self._last_rpm = np.array([r.rpm for r in batch.rpm])
            self.counters["thrust_updates"] += 1
        if batch.vio is not None:
            self.pose.submit_vio(batch.vio)
        if self.tick % POSE_DIV == 0:
            self.pose.tick(batch.imu, time_s=state.time)
            self._last_pose_time = state.time
            self.counters["pose_updates"] += 1

        self.tick += 1
        frame = self._build_frame(state)
        for sink in self.sinks:
            sink(frame)
        return frame

    def _advance_schedule_safe(self, estimate: MpcState, t_now: float) -> TakeoffSchedule:
        new = advance_schedule(self.schedule, estimate, self._contact, MPC_DIV * self.sim.dt_sim)
        if new.phase is FlightPhase.SHUTDOWN and self.schedule.phase is not FlightPhase.SHUTDOWN:
            self._set_schedule(new, t_now)
        return new

    def _build_frame(self, state) -> TelemetryFrame:
        model = self.sim.model
        truth_com = com_position(state, model)
        truth_euler = quat_to_euler_zyx(state.base.orientation)
        base_est = self.pose.state
        est_com = estimated_com(base_est, state.q, model)
        est_euler = quat_to_euler_zyx(base_est.orientation)
        cov = self.pose.covariance_diagonal
        ref_com, _ = self.reference.sample(state.time)

        altitude = truth_com[2] - self._initial_com_z
        self._peak_altitude = max(self._peak_altitude, altitude)
        in_window = self.mae_window is None or (self.mae_window[0] <= state.time <= self.mae_window[1])
        if in_window and self.schedule.phase is FlightPhase.AIRBORNE:
            self._mae_sum += np.abs(truth_com - ref_com)
            err = np.abs((truth_euler - self.schedule.desired_euler + np.pi) % (2 * np.pi) - np.pi)
            self._mae_euler_sum += float(np.max(err))
            self._mae_count += 1

        diag = self.last_diag
        return TelemetryFrame.build(
            t=state.time,
            phase=self.schedule.phase.value,
            alpha=self.schedule.alpha,
            truth_com=truth_com,
            truth_euler=truth_euler,
            est_com=est_com,
            est_euler=est_euler,
            est_cov_diag=cov,
            jet_thrust=state.thrusts(),
            jet_thrust_est=self.thrust.estimates,
            jet_cov_trace=self.thrust.covariance_traces(),
            jet_throttle=self.throttle.u,
            jet_rpm=self._last_rpm,
            jet_nis=self.thrust.nis,
            ref_com=ref_com,
            mpc_iterations=diag.qp_iterations,
            mpc_status=diag.qp_status,
            mpc_cost=diag.cost,
            mpc_solve_ms=diag.solve_time * 1e3,
            contact=self._contact,
            shutdown_reason=self.schedule.shutdown_reason,
        )

    def run(self, duration_s: float, realtime_factor: float = 0.0) -> RunReport:
        import gc

        started = time.perf_counter()
        wall_start = started
        ticks = int(round(duration_s / self.sim.dt_sim))
        end_reason = None
        gc_was_enabled = gc.isenabled()
        gc.disable()  # the loop allocates only small, acyclic values
        try:
            self._run_loop(ticks, wall_start, realtime_factor)
        except _RunEnded as stop:
            end_reason = stop.reason
        finally:
            if gc_was_enabled:
                gc.enable()
        wall = time.perf_counter() - started
        mae = (self._mae_sum / self._mae_count).tolist() if self._mae_count else [float("nan")] * 3
        mae_euler = np.degrees(self._mae_euler_sum / self._mae_count) if self._mae_count else float("nan")
        return RunReport(
            final_phase=self.schedule.phase.value,
            peak_altitude=self._peak_altitude,
            tracking_mae=mae,
            orientation_mae_deg=float(mae_euler),
            shutdown_reason=self.schedule.shutdown_reason or end_reason,
            duration_s=self.sim.state.time,
            wall_time_s=wall,
            counters=dict(self.counters),
            log_path=None,
        )

    def _run_loop(self, ticks: int, wall_start: float, realtime_factor: float) -> None:
        for _ in range(ticks):
            try:
                self.step()
            except SimulationFault as exc:
                self._set_schedule(
                    self.schedule.with_phase(FlightPhase.SHUTDOWN, reason=f"simulation fault: {exc}"),
                    self.sim.state.time,
                )
                raise _RunEnded(str(exc))
            if realtime_factor > 0.0:
                target_wall = wall_start + self.sim.state.time / realtime_factor
                lag = target_wall - time.perf_counter()
                if lag > 0:
                    time.sleep(lag)
            if (
                self.schedule.phase is FlightPhase.SHUTDOWN
                and self._shutdown_entered is not None
                and self.sim.state.time > self._shutdown_entered + SHUTDOWN_RAMP_S + 0.5
            ):
                raise _RunEnded(None)


def build_runtime(cfg: dict, wall_clock_diagnostics: bool = False) -> FlightRuntime:
    """Assemble simulator, estimators, controller and schedule from a config tree."""
    model = build_robot_model(cfg)
    coeffs = build_jet_coefficients(cfg)
    noise = build_noise_config(cfg)
    contact = build_contact_params(cfg)
    sim = Simulator(
        model,
        coeffs,
        noise=noise,
        contact=contact,
        vio_latency_s=float(cfg["estimators"]["vio_latency_s"]),
    )
    schedule = build_schedule(cfg)
    trim_u = None
    if cfg["initial"]["kind"] == "airborne":
        sim.state, trim_u = _airborne_initial_state(cfg, model, coeffs)
        schedule = replace(schedule, alpha=1.0, phase=FlightPhase.RAMP).with_phase(FlightPhase.AIRBORNE)
    pose = PoseEstimator(sim.state.base)
    thrust = ThrustEstimator(coeffs, model.jets)
    initial_thrusts = sim.state.thrusts()
    thrust.beliefs = [initial_thrust_belief(float(t)) for t in initial_thrusts]
    thrust.estimates = initial_thrusts.copy()
    controller = MpcController(model, coeffs, build_mpc_params(cfg))
    reference, window = build_reference(cfg, com_position(sim.state, model))
    if cfg["run"]["mae_window"] is not None:
        window = tuple(float(v) for v in cfg["run"]["mae_window"])
    runtime = FlightRuntime(
        sim,
        pose,
        thrust,
        controller,
        schedule,
        reference,
        mae_window=window,
        wall_clock_diagnostics=wall_clock_diagnostics,
    )
    if trim_u is not None:
        runtime.throttle = ThrottleCommand(trim_u)
        controller.prev_throttle = ThrottleCommand(trim_u)
    runtime.script_events(
        [
            OperatorCommand(
                kind=CommandKind(e["cmd"]),
                dz=float(e.get("dz", 0.0)),
                t_received=float(e["t"]),
            )
            for e in cfg["events"]
        ]
    )
    return runtime


def _airborne_initial_state(cfg: dict, model, coeffs):
    """Floating start at hover trim (jets spun up, thrust balancing weight)."""
    from .jets import JetState
    from .model import CentroidalState, JointConfig
    from .mpc import MpcState, trim_thrusts
    from .pose_estimation import BaseState
    from .sim import WorldState

    com = cfg["initial"]["position"]
    com = np.array([0.0, 0.0, 1.6]) if com is None else np.asarray(com, dtype=float).reshape(3)
    probe = MpcState(
        CentroidalState(com, np.zeros(3), np.zeros(3), np.zeros(3)),
        tuple(JetState(0.0, 0.0) for _ in range(4)),
        JointConfig.zero(),
    )
    thrusts = trim_thrusts(probe, 1.0, model)
    trim_u = np.array([coeffs.equilibrium_throttle(float(t)) for t in thrusts])
    base = BaseState.at_rest(position=com - model.com_offset)
    state = WorldState(
        base=base,
        jets=tuple(JetState(float(t), 0.0) for t in thrusts),
        q=JointConfig.zero(),
        time=0.0,
        contact_forces=np.zeros((2, 3)),
    )
    return state, trim_u


def run_scenario(config_path, log_path=None, overrides: list[str] | None = None) -> RunReport:
    """Headless end-to-end run; deterministic for a fixed seed."""
    from .config import apply_overrides

    cfg = load_config(config_path)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return run_scenario_from_config(cfg, log_path=log_path)


def run_scenario_from_config(cfg: dict, log_path=None, extra_sinks=None, realtime_factor=None) -> RunReport:
    runtime = build_runtime(cfg)
    log = None
    if log_path is not None:
        log = FlightLog(log_path, seed=int(cfg["run"]["seed"]), scenario=cfg["reference"]["kind"])
        runtime.add_sink(log.append)
    for sink in extra_sinks or []:
        runtime.add_sink(sink)
    factor = cfg["run"]["realtime_factor"] if realtime_factor is None else realtime_factor
    try:
        report = runtime.run(float(cfg["run"]["duration_s"]), realtime_factor=float(factor))
    finally:
        if log is not None:
            log.close()
    report.log_path = str(log_path) if log_path is not None else None
    return report


# --- telemetry service ---


class _Client:
    def __init__(self, sock: socket.socket, maxlen: int):
        self.sock = sock
        self.queue: deque[str] = deque(maxlen=maxlen)
        self.cond = threading.Condition()
        self.alive = True
        self.overflow_since: float | None = None


class TelemetryServer:
    """Newline-JSON fan-out plus command ingestion over one duplex socket.

    Frames are decimated to the configured stream rate. A subscriber that
    stays saturated for over a second is dropped; the control loop never
    blocks on telemetry.
    """

    def __init__(self, runtime: FlightRuntime, bind: str = "127.0.0.1:9411", decimation: int = 100):
        host, _, port = bind.partition(":")
        self.runtime = runtime
        self.decimation = max(1, int(decimation))
        self._frame_counter = 0
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, int(port) if port else 9411))
        self._server.listen(8)
        self._server.settimeout(0.2)
        self.address = self._server.getsockname()
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        runtime.add_sink(self._on_frame)

    def start(self) -> None:
        self._accept_thread.start()

    def stop(self) -> None:
        self._stop.set()
        try:
            self._server.close()
        except OSError:
            pass
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            self._drop(client)

    # frame sink (runtime thread)
    def _on_frame(self, frame: TelemetryFrame) -> None:
        self._frame_counter += 1
        if self._frame_counter % self.decimation:
            return
        line = frame.to_json()
        now = time.monotonic()
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            with client.cond:
                if not client.alive:
                    continue
                if len(client.queue) == client.queue.maxlen:
                    if client.overflow_since is None:
                        client.overflow_since = now
                    elif now - client.overflow_since > 1.0:
                        client.alive = False
                        client.cond.notify_all()
                        continue
                else:
                    client.overflow_since = None
                client.queue.append(line)  # drop-oldest when full
                client.cond.notify_all()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            client = _Client(sock, maxlen=max(10, 2 * max(1, 1000 // self.decimation)))
            with self._clients_lock:
                self._clients.append(client)
            threading.Thread(target=self._writer_loop, args=(client,), daemon=True).start()
            threading.Thread(target=self._reader_loop, args=(client,), daemon=True).start()

    def _writer_loop(self, client: _Client) -> None:
        try:
            while True:
                with client.cond:
                    while client.alive and not client.queue:
                        client.cond.wait(timeout=0.5)
                        if self._stop.is_set():
                            client.alive = False
                    if not client.alive:
                        break
                    line = client.queue.popleft()
                client.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError:
            pass
        finally:
            self._drop(client)

    def _reader_loop(self, client: _Client) -> None:
        buf = b""
        try:
            while not self._stop.is_set():
                chunk = client.sock.recv(4096)
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if not line.strip():
                        continue
                    self._handle_command_line(client, line)
        except (OSError, ValueError):
            pass
        finally:
            self._drop(client)

    def _handle_command_line(self, client: _Client, line: bytes) -> None:
        try:
            data = json.loads(line.decode("utf-8"))
            kind = CommandKind(str(data["cmd"]))
            cmd = OperatorCommand(kind=kind, dz=float(data.get("dz", 0.0)), t_received=self.runtime.sim.state.time)
        except (ValueError, KeyError, UnicodeDecodeError):
            # malformed input: close this subscriber, leave the run alone
            with client.cond:
                client.alive = False
                client.cond.notify_all()
            return
        self.runtime.submit_command(cmd)
        ack = json.dumps(
            {"v": 1, "kind": "ack", "cmd": kind.value, "accepted": True, "reason": "queued"},
            separators=(",", ":"),
        )
        with client.cond:
            if client.alive:
                client.queue.append(ack)
                client.cond.notify_all()

    def _drop(self, client: _Client) -> None:
        with client.cond:
            client.alive = False
            client.cond.notify_all()
        try:
            client.sock.close()
        except OSError:
            pass
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)


def serve_scenario(cfg: dict, bind: str, log_path=None, realtime_factor: float | None = None) -> RunReport:
    """Run a scenario with the telemetry service attached (interactive mode)."""
    runtime = build_runtime(cfg, wall_clock_diagnostics=True)
    server = TelemetryServer(runtime, bind=bind, decimation=int(cfg["telemetry"]["decimation"]))
    log = None
    if log_path is not None:
        log = FlightLog(log_path, seed=int(cfg["run"]["seed"]), scenario=cfg["reference"]["kind"])
        runtime.add_sink(log.append)
    server.start()
    factor = cfg["run"]["realtime_factor"] if realtime_factor is None else realtime_factor
    if factor <= 0.0:
        factor = 1.0  # interactive serving defaults to real time
    try:
        report = runtime.run(float(cfg["run"]["duration_s"]), realtime_factor=float(factor))
    finally:
        server.stop()
        if log is not None:
            log.close()
    report.log_path = str(log_path) if log_path is not None else None
    return report
