"""Scenario configuration: YAML key tree with a mandatory schema version.

All units are SI unless a key name says otherwise (``*_deg`` are degrees).
Unknown keys are rejected so typos fail loudly, with the offending key path
in the message. ``--set a.b.c=value`` overrides individual keys.
"""

from __future__ import annotations

import copy
import numpy as np
import yaml

from .errors import ConfigError
from .jets import JetCoefficients
from .model import RobotModel, default_robot_model
from .mpc import MpcParams, ReferenceTrajectory, TakeoffSchedule
from .sim import ContactParams, NoiseConfig

CONFIG_SCHEMA_VERSION = 1

DEFAULTS: dict = {
    "schema_version": CONFIG_SCHEMA_VERSION,
    "run": {
        "duration_s": 46.0,
        "seed": 12345,
        "realtime_factor": 0.0,  # 0 = as fast as possible
        "mae_window": None,  # [start_s, end_s] for the report; null = airborne span
    },
    "robot": {
        "mass_kg": 40.0,
        "inertia_diag": [2.0, 1.5, 1.0],
        "gravity": 9.81,
        "jetpack_tilt_deg": 10.0,
        "com_offset": None,  # null = thrust centroid (exact hover trim)
    },
    "jets": {
        "a1": -1.96,
        "a2": -2.8,
        "b1": 0.7056,
        "b2": 0.034496,
        "c": 15.68,
        "idle_thrust": 8.0,
    },
    "noise": {
        "ft_force_std": 2.0,
        "imu_orientation_std": 0.01,
        "gyro_std": 0.02,
        "vio_pos_std": 0.01,
        "vio_orientation_std": 0.02,
        "vio_vel_std": 0.02,
        "vio_gyro_std": 0.05,
        "rpm_std": 2000.0,
        "ft_bias": None,  # null or 4x3 newtons in the sensor frame
    },
    "contact": {
        "stiffness": 1e5,
        "damping": 1000.0,
        "friction_mu": 0.8,
        "tangential_damping": 500.0,
    },
    "estimators": {
        "vio_latency_s": 0.02,
    },
    "initial": {
        "kind": "settled",  # settled (standing on the springs) | airborne (at hover trim)
        "position": None,  # airborne only: world CoM position, default [0, 0, 1.6]
    },
    "mpc": {
        "horizon_steps": 15,
        "dt_coarse": 0.1,
        "w_com_pos": [350.0, 350.0, 200.0],
        "w_euler": [40.0, 60.0, 60.0],
        "w_lin_momentum": [0.8, 0.8, 0.8],
        "w_ang_momentum": [25.0, 25.0, 12.0],
        "w_throttle": 0.02,
        "w_joint_rate": 8.0,
        "w_joint_pos": 1.0,
        "throttle_rate_limit": 15.0,
        "joint_rate_limit": 0.5,
        "pitch_guard": 0.2,
        "shutdown_orientation_limit_deg": 30.0,
    },
    "schedule": {
        "ramp_rate": 0.04,
    },
    "reference": {
        "kind": "takeoff",  # takeoff | square | hold
        "climb_height": 1.0,
        "climb_start_s": 30.5,
        "climb_duration_s": 4.0,
        "square_side": 0.4,
        "square_speed": 0.1,
        "desired_euler_deg": [0.0, 0.0, 0.0],
    },
    "events": [
        {"t": 0.0, "cmd": "arm"},
        {"t": 5.0, "cmd": "start_takeoff"},
    ],
    "telemetry": {
        "decimation": 100,  # live stream every Nth 1 kHz frame (default 10 Hz)
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> dict:
    """Parse and validate a scenario file; parse errors carry path and line."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else "?"
        raise ConfigError(f"{path}:{line}: YAML parse error: {exc.problem}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate_config(raw, source=str(path))


def validate_config(raw: dict, source: str = "<dict>") -> dict:
    if "schema_version" not in raw:
        raise ConfigError(f"{source}: missing mandatory key schema_version")
    if raw["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"{source}: schema_version {raw['schema_version']} unsupported (expected {CONFIG_SCHEMA_VERSION})"
        )
    try:
        cfg = _merge(DEFAULTS, raw)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    _check(cfg["run"]["duration_s"] > 0.0, "run.duration_s must be positive", source)
    _check(cfg["robot"]["mass_kg"] > 0.0, "robot.mass_kg must be positive", source)
    _check(cfg["robot"]["gravity"] > 0.0, "robot.gravity must be positive", source)
    _check(cfg["mpc"]["horizon_steps"] >= 2, "mpc.horizon_steps must be >= 2", source)
    _check(cfg["schedule"]["ramp_rate"] >= 0.0, "schedule.ramp_rate must be nonnegative", source)
    _check(
        cfg["reference"]["kind"] in ("takeoff", "square", "hold"),
        "reference.kind must be one of takeoff, square, hold",
        source,
    )
    _check(
        cfg["initial"]["kind"] in ("settled", "airborne"),
        "initial.kind must be settled or airborne",
        source,
    )
    _check(cfg["telemetry"]["decimation"] >= 1, "telemetry.decimation must be >= 1", source)
    for idx, event in enumerate(cfg["events"]):
        _check(isinstance(event, dict) and "t" in event and "cmd" in event, f"events[{idx}] needs t and cmd", source)
        _check(
            event["cmd"] in ("arm", "start_takeoff", "set_reference", "abort"),
            f"events[{idx}].cmd unknown: {event['cmd']}",
            source,
        )
    return cfg


def _check(cond: bool, message: str, source: str) -> None:
    if not cond:
        raise ConfigError(f"{source}: {message}")


def apply_overrides(cfg: dict, assignments: list[str]) -> dict:
    """Apply --set key.path=value pairs (values parsed as YAML scalars)."""
    cfg = copy.deepcopy(cfg)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"--set needs key=value, got {assignment!r}")
        key_path, _, raw_value = assignment.partition("=")
        value = yaml.safe_load(raw_value)
        node = cfg
        keys = key_path.strip().split(".")
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"unknown config key: {key_path}")
            node = node[key]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(f"unknown config key: {key_path}")
        node[keys[-1]] = value
    return validate_config(cfg, source="<overrides>")


# --- config tree to domain objects ---


def build_robot_model(cfg: dict) -> RobotModel:
    robot = cfg["robot"]
    return default_robot_model(
        mass=float(robot["mass_kg"]),
        inertia_diag=tuple(float(v) for v in robot["inertia_diag"]),
        gravity_accel=float(robot["gravity"]),
        jetpack_tilt=np.deg2rad(float(robot["jetpack_tilt_deg"])),
        com_offset=None if robot["com_offset"] is None else tuple(robot["com_offset"]),
    )


def build_jet_coefficients(cfg: dict) -> JetCoefficients:
    jets = cfg["jets"]
    return JetCoefficients(
        a1=float(jets["a1"]),
        a2=float(jets["a2"]),
        b1=float(jets["b1"]),
        b2=float(jets["b2"]),
        c=float(jets["c"]),
        idle_thrust=float(jets["idle_thrust"]),
    )


def build_noise_config(cfg: dict) -> NoiseConfig:
    noise = cfg["noise"]
    bias = np.zeros((4, 3)) if noise["ft_bias"] is None else np.asarray(noise["ft_bias"], dtype=float)
    return NoiseConfig(
        ft_force_std=float(noise["ft_force_std"]),
        imu_orientation_std=float(noise["imu_orientation_std"]),
        gyro_std=float(noise["gyro_std"]),
        vio_pos_std=float(noise["vio_pos_std"]),
        vio_orientation_std=float(noise["vio_orientation_std"]),
        vio_vel_std=float(noise["vio_vel_std"]),
        vio_gyro_std=float(noise["vio_gyro_std"]),
        rpm_std=float(noise["rpm_std"]),
        ft_bias=bias,
        seed=int(cfg["run"]["seed"]),
    )


def build_contact_params(cfg: dict) -> ContactParams:
    contact = cfg["contact"]
    return ContactParams(
        stiffness=float(contact["stiffness"]),
        damping=float(contact["damping"]),
        friction_mu=float(contact["friction_mu"]),
        tangential_damping=float(contact["tangential_damping"]),
    )


def build_mpc_params(cfg: dict) -> MpcParams:
    mpc = cfg["mpc"]
    return MpcParams(
        horizon_steps=int(mpc["horizon_steps"]),
        dt_coarse=float(mpc["dt_coarse"]),
        w_com_pos=tuple(float(v) for v in mpc["w_com_pos"]),
        w_euler=tuple(float(v) for v in mpc["w_euler"]),
        w_lin_momentum=tuple(float(v) for v in mpc["w_lin_momentum"]),
        w_ang_momentum=tuple(float(v) for v in mpc["w_ang_momentum"]),
        w_throttle=float(mpc["w_throttle"]),
        w_joint_rate=float(mpc["w_joint_rate"]),
        w_joint_pos=float(mpc["w_joint_pos"]),
        throttle_rate_limit=float(mpc["throttle_rate_limit"]),
        joint_rate_limit=float(mpc["joint_rate_limit"]),
        pitch_guard=float(mpc["pitch_guard"]),
        shutdown_orientation_limit=np.deg2rad(float(mpc["shutdown_orientation_limit_deg"])),
    )


def build_schedule(cfg: dict) -> TakeoffSchedule:
    desired = np.deg2rad(np.asarray(cfg["reference"]["desired_euler_deg"], dtype=float))
    return TakeoffSchedule(
        alpha=0.0,
        ramp_rate=float(cfg["schedule"]["ramp_rate"]),
        desired_euler=desired,
        shutdown_orientation_limit=np.deg2rad(float(cfg["mpc"]["shutdown_orientation_limit_deg"])),
    )


def build_reference(cfg: dict, initial_com: np.ndarray) -> tuple[ReferenceTrajectory, tuple[float, float] | None]:
    """(trajectory, traversal window for the MAE report)."""
    ref = cfg["reference"]
    desired = np.deg2rad(np.asarray(ref["desired_euler_deg"], dtype=float))
    initial_com = np.asarray(initial_com, dtype=float).reshape(3)
    kind = ref["kind"]
    if kind == "hold":
        return ReferenceTrajectory([0.0], [initial_com], desired), None
    t0 = float(ref["climb_start_s"])
    t1 = t0 + float(ref["climb_duration_s"])
    top = initial_com + np.array([0.0, 0.0, float(ref["climb_height"])])
    if kind == "takeoff":
        times = [0.0, t0, t1]
        points = [initial_com, initial_com, top]
        return ReferenceTrajectory(times, points, desired), None
    # square: climb, settle, then trace the square at constant height
    side = float(ref["square_side"])
    speed = float(ref["square_speed"])
    leg_time = side / speed
    settle = 3.0
    corners = [
        top,
        top + np.array([side, 0.0, 0.0]),
        top + np.array([side, side, 0.0]),
        top + np.array([0.0, side, 0.0]),
        top,
    ]
    times = [0.0, t0, t1, t1 + settle]
    points = [initial_com, initial_com, top, top]
    for i, corner in enumerate(corners[1:], start=1):
        times.append(t1 + settle + i * leg_time)
        points.append(corner)
    window = (t1 + settle, times[-1])
    return ReferenceTrajectory(times, points, desired), window
