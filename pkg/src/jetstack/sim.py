"""Fixed-step rigid-body simulation with turbine forces, foot contact, sensors.

Minimal re-implemented physics rather than an external engine: determinism
and desk-scale testability win over fidelity here. The floating base
integrates semi-implicitly (velocity kick with current-state forces, then a
trapezoidal position update, which keeps free-fall exact and mechanical
energy drift scenario-independent); turbines advance through jet_step and
joints through a first-order position servo.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SimulationFault
from .geometry import cross3, cross_last, quat_from_rotvec, quat_multiply, quat_normalize, quat_rotate, quat_to_matrix
from .jets import JetCoefficients, JetState, ThrottleCommand, jet_step
from .model import JointConfig, RobotModel, jet_world_arrays
from .pose_estimation import BaseState, ImuSample, VioSample
from .thrust_estimation import RPM_MAX, FtReading, RpmReading, RpmThrustMap

SIM_DT = 0.001  # 1 kHz
JOINT_SERVO_TAU = 0.05  # s
FT_RATE_DIV = 10  # 100 Hz
IMU_RATE_DIV = 5  # 200 Hz
VIO_RATE_HZ = 30


@dataclass(frozen=True)
class WorldState:
    """Ground-truth state; time advances by exactly dt_sim per step."""

    base: BaseState
    jets: tuple[JetState, ...]
    q: JointConfig
    time: float
    contact_forces: np.ndarray  # (2, 3) per-foot world-frame force

    def __post_init__(self):
        object.__setattr__(self, "jets", tuple(self.jets))
        object.__setattr__(self, "contact_forces", np.asarray(self.contact_forces, dtype=float).reshape(2, 3))

    def thrusts(self) -> np.ndarray:
        return np.array([j.thrust for j in self.jets])


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 1e5  # N/m per contact point
    damping: float = 1000.0  # N*s/m per contact point
    friction_mu: float = 0.8
    tangential_damping: float = 500.0  # N*s/m per contact point


@dataclass(frozen=True)
class NoiseConfig:
    """Per-sensor Gaussian stds; zero everywhere means ideal sensors."""

    ft_force_std: float = 2.0  # N, per axis
    imu_orientation_std: float = 0.01  # rad
    gyro_std: float = 0.02  # rad/s
    vio_pos_std: float = 0.01  # m
    vio_orientation_std: float = 0.02  # rad
    vio_vel_std: float = 0.02  # m/s
    vio_gyro_std: float = 0.05  # rad/s
    rpm_std: float = 2000.0  # rev/min
    ft_bias: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))  # sensor frame, N
    seed: int = 0

    def __post_init__(self):
        for name in (
            "ft_force_std",
            "imu_orientation_std",
            "gyro_std",
            "vio_pos_std",
            "vio_orientation_std",
            "vio_vel_std",
            "vio_gyro_std",
            "rpm_std",
        ):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be nonnegative")
        object.__setattr__(self, "ft_bias", np.asarray(self.ft_bias, dtype=float).reshape(4, 3))

    @staticmethod
    def silent(seed: int = 0) -> "NoiseConfig":
        return NoiseConfig(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, np.zeros((4, 3)), seed)


def contact_force(depth: float, rate: float, params: ContactParams) -> np.ndarray:
    """Normal spring-damper force along world z; never pulls, zero out of contact."""
    if depth <= 0.0:
        return np.zeros(3)
    normal = max(0.0, params.stiffness * depth + params.damping * rate)
    return np.array([0.0, 0.0, normal])


def _base_pose(base: BaseState):
    from .geometry import Transform

    return Transform(rot=quat_to_matrix(base.orientation), pos=base.position)


def world_step(
    w: WorldState,
    throttle: ThrottleCommand,
    joint_ref: np.ndarray,
    model: RobotModel,
    coeffs: JetCoefficients,
    contact: ContactParams = ContactParams(),
    dt_sim: float = SIM_DT,
) -> WorldState:
    """Advance truth by one fixed step under jet wrenches, gravity and contact."""
    base = w.base
    rot = quat_to_matrix(base.orientation)
    omega_world = rot @ base.ang_velocity
    r_c_world = rot @ model.com_offset
    com = base.position + r_c_world
    v_com = base.lin_velocity + cross3(omega_world, r_c_world)

    # jet wrench at the current state (thrusts before this step's spool-up)
    thrusts = w.thrusts()
    jet_pos, jet_axes = jet_world_arrays(model, w.q.angles, rot, base.position)
    jet_force = thrusts @ jet_axes
    force = jet_force + np.array([0.0, 0.0, -model.weight])
    torque = cross_last(jet_pos - com, jet_axes * thrusts[:, None]).sum(axis=0)

    # contact: all corner points at once
    contact_per_foot = np.zeros((2, 3))
    pts = base.position + model._all_corners @ rot.T
    depths = -pts[:, 2]
    touching = np.nonzero(depths > 0.0)[0]
    if touching.size:
        arms = pts[touching] - base.position
        v_pts = base.lin_velocity + cross_last(omega_world, arms)
        normal = np.maximum(0.0, contact.stiffness * depths[touching] + contact.damping * (-v_pts[:, 2]))
        tangential = -contact.tangential_damping * v_pts[:, :2]
        t_norm = np.linalg.norm(tangential, axis=1)
        cap = contact.friction_mu * normal
        over = t_norm > cap
        if np.any(over):
            tangential[over] *= (cap[over] / t_norm[over])[:, None]
        forces = np.concatenate([tangential, normal[:, None]], axis=1)
        feet_idx = model._corner_foot_index[touching]
        for foot in (0, 1):
            sel = feet_idx == foot
            if np.any(sel):
                contact_per_foot[foot] = forces[sel].sum(axis=0)
        force = force + forces.sum(axis=0)
        torque = torque + cross_last(pts[touching] - com, forces).sum(axis=0)

    # translational: velocity kick then trapezoidal position update
    v_com_new = v_com + (dt_sim / model.mass) * force
    com_new = com + (0.5 * dt_sim) * (v_com + v_com_new)

    # rotational: momentum kick, then attitude from the new world rate
    h_new = rot @ (model.inertia_body @ (rot.T @ omega_world)) + dt_sim * torque
    omega_new_world = rot @ (model.inertia_inv @ (rot.T @ h_new))
    q_new = quat_normalize(quat_multiply(quat_from_rotvec(omega_new_world * dt_sim), base.orientation))
    rot_new = quat_to_matrix(q_new)
    # conserve world-frame angular momentum through the attitude update
    omega_new_world = rot_new @ (model.inertia_inv @ (rot_new.T @ h_new))

    r_c_new = rot_new @ model.com_offset
    base_pos_new = com_new - r_c_new
    base_vel_new = v_com_new - cross3(omega_new_world, r_c_new)

    jets_new = tuple(jet_step(j, float(u), coeffs, dt_sim) for j, u in zip(w.jets, throttle.u))
    joint_ref = np.asarray(joint_ref, dtype=float).reshape(4)
    servo_gain = dt_sim / JOINT_SERVO_TAU
    q_joints = w.q.angles + servo_gain * (joint_ref - w.q.angles)
    q_joints = np.clip(q_joints, model.joint_limits_lo, model.joint_limits_hi)

    if not (
        np.isfinite(base_pos_new).all()
        and np.isfinite(base_vel_new).all()
        and np.isfinite(q_new).all()
        and np.isfinite(omega_new_world).all()
    ):
        raise SimulationFault(f"non-finite world state at t = {w.time + dt_sim:.3f} s")

    base_new = BaseState(
        position=base_pos_new,
        orientation=q_new,
        lin_velocity=base_vel_new,
        ang_velocity=rot_new.T @ omega_new_world,
    )
    return WorldState(
        base=base_new,
        jets=jets_new,
        q=JointConfig(q_joints),
        time=w.time + dt_sim,
        contact_forces=contact_per_foot,
    )


def ground_contact_flag(w: WorldState, threshold: float = 1.0) -> bool:
    """True iff either foot carries more than the threshold normal force."""
    return bool(np.any(w.contact_forces[:, 2] > threshold))


def com_position(w: WorldState, model: RobotModel) -> np.ndarray:
    return w.base.position + quat_rotate(w.base.orientation, model.com_offset)


def com_velocity(w: WorldState, model: RobotModel) -> np.ndarray:
    rot = quat_to_matrix(w.base.orientation)
    omega_world = rot @ w.base.ang_velocity
    return w.base.lin_velocity + np.cross(omega_world, rot @ model.com_offset)


def settled_initial_state(model: RobotModel, contact: ContactParams = ContactParams()) -> WorldState:
    """Robot standing at rest with spring compression balancing its weight."""
    n_points = sum(foot.corners.shape[0] for foot in model.feet)
    penetration = model.weight / (contact.stiffness * n_points)
    sole_height = -float(min(foot.corners[:, 2].min() for foot in model.feet))
    base = BaseState.at_rest(position=(0.0, 0.0, sole_height - penetration))
    per_foot = np.zeros((2, 3))
    per_foot[:, 2] = model.weight / 2.0
    return WorldState(base=base, jets=tuple(JetState(0.0, 0.0) for _ in range(4)), q=JointConfig.zero(), time=0.0, contact_forces=per_foot)


@dataclass(frozen=True)
class SensorBatch:
    """Sensors emitted on one sim tick; fields are None off their schedule."""

    ft: list[FtReading] | None = None
    rpm: list[RpmReading] | None = None
    imu: ImuSample | None = None
    vio: VioSample | None = None


class SensorSampler:
    """Deterministic noise-injected sensor synthesis on fixed tick schedules.

    FT/RPM at 100 Hz, IMU at 200 Hz, VIO at 30 Hz delayed by the configured
    latency. Deterministic for a fixed (seed, tick sequence).
    """

    def __init__(
        self,
        model: RobotModel,
        noise: NoiseConfig,
        rpm_map: RpmThrustMap | None = None,
        vio_latency_s: float = 0.02,
        dt_sim: float = SIM_DT,
    ):
        self.model = model
        self.noise = noise
        self.rpm_map = rpm_map if rpm_map is not None else RpmThrustMap()
        self.dt_sim = dt_sim
        self._rng = np.random.default_rng(noise.seed)
        self._latency_ticks = int(round(vio_latency_s / dt_sim))
        self._history: deque[BaseState] = deque(maxlen=self._latency_ticks + 1)
        # integer schedule arithmetic: float division drops ticks to rounding
        self._ticks_per_second = int(round(1.0 / dt_sim))

    def sample(self, w: WorldState, tick: int) -> SensorBatch:
        self._history.append(w.base)
        noise = self.noise
        rng = self._rng
        ft = rpm = imu = vio = None
        if tick % FT_RATE_DIV == 0:
            ft = []
            rpm = []
            for i, (jet, mount) in enumerate(zip(w.jets, self.model.jets)):
                force = jet.thrust * mount.thrust_axis_local + noise.ft_bias[i]
                if noise.ft_force_std > 0.0:
                    force = force + rng.normal(0.0, noise.ft_force_std, 3)
                torque = rng.normal(0.0, noise.ft_force_std * 0.05, 3) if noise.ft_force_std > 0.0 else np.zeros(3)
                ft.append(FtReading(force, torque, bias=noise.ft_bias[i]))
                rpm_true = self.rpm_map.rpm(jet.thrust)
                rpm_meas = rpm_true + (rng.normal(0.0, noise.rpm_std) if noise.rpm_std > 0.0 else 0.0)
                rpm.append(RpmReading(float(np.clip(rpm_meas, 0.0, RPM_MAX))))
        if tick % IMU_RATE_DIV == 0:
            q = w.base.orientation
            if noise.imu_orientation_std > 0.0:
                q = quat_multiply(q, quat_from_rotvec(rng.normal(0.0, noise.imu_orientation_std, 3)))
            gyro = w.base.ang_velocity
            if noise.gyro_std > 0.0:
                gyro = gyro + rng.normal(0.0, noise.gyro_std, 3)
            imu = ImuSample(q, gyro)
        if self._vio_due(tick):
            delayed = self._history[0]
            pos = delayed.position
            q = delayed.orientation
            vel = delayed.lin_velocity
            gyro = delayed.ang_velocity
            if noise.vio_pos_std > 0.0:
                pos = pos + rng.normal(0.0, noise.vio_pos_std, 3)
            if noise.vio_orientation_std > 0.0:
                q = quat_multiply(q, quat_from_rotvec(rng.normal(0.0, noise.vio_orientation_std, 3)))
            if noise.vio_vel_std > 0.0:
                vel = vel + rng.normal(0.0, noise.vio_vel_std, 3)
            if noise.vio_gyro_std > 0.0:
                gyro = gyro + rng.normal(0.0, noise.vio_gyro_std, 3)
            vio = VioSample(pos, q, vel, gyro)
        return SensorBatch(ft=ft, rpm=rpm, imu=imu, vio=vio)

    def _vio_due(self, tick: int) -> bool:
        num, den = VIO_RATE_HZ, self._ticks_per_second
        return ((tick + 1) * num) // den > (tick * num) // den


class Simulator:
    """Owns the world state and advances it on the single simulation thread."""

    def __init__(
        self,
        model: RobotModel,
        coeffs: JetCoefficients,
        noise: NoiseConfig | None = None,
        contact: ContactParams = ContactParams(),
        initial: WorldState | None = None,
        dt_sim: float = SIM_DT,
        vio_latency_s: float = 0.02,
    ):
        self.model = model
        self.coeffs = coeffs
        self.contact = contact
        self.dt_sim = dt_sim
        self.state = initial if initial is not None else settled_initial_state(model, contact)
        self.sampler = SensorSampler(model, noise if noise is not None else NoiseConfig(), vio_latency_s=vio_latency_s, dt_sim=dt_sim)
        self.tick = 0
        self.faulted = False

    def step(self, throttle: ThrottleCommand, joint_ref: np.ndarray) -> tuple[WorldState, SensorBatch]:
        if self.faulted:
            raise SimulationFault("world is frozen after a previous fault")
        try:
            self.state = world_step(self.state, throttle, joint_ref, self.model, self.coeffs, self.contact, self.dt_sim)
        except SimulationFault:
            self.faulted = True
            raise
        batch = self.sampler.sample(self.state, self.tick)
        self.tick += 1
        return self.state, batch
