"""Robot model: reduced jet-mount kinematics, thrust allocation, centroidal dynamics.

The model is deliberately reduced: four shoulder joints (pitch/roll per arm)
steer the two arm-mounted turbines, the two jetpack turbines are rigid with a
configurable tilt about the base lateral axis. The centroidal wrench is

    rhs = A(q) @ T + (0, 0, -alpha*m*g, 0, 0, 0)

with world z up, A(q) the 6x4 allocation matrix (force rows then torque rows
about the CoM), T per-turbine thrust intensities and alpha the take-off
gravity-blending parameter in [0, 1] (alpha = 1 is free flight).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import Transform, rot_x, rot_y

N_JETS = 4
N_JOINTS = 4

# joint vector layout: (left pitch, left roll, right pitch, right roll)
_ARM_JOINTS = {"LeftArm": (0, 1), "RightArm": (2, 3)}


class MountParent(enum.Enum):
    LEFT_ARM = "LeftArm"
    RIGHT_ARM = "RightArm"
    JETPACK_LEFT = "JetpackLeft"
    JETPACK_RIGHT = "JetpackRight"

    @property
    def is_arm(self) -> bool:
        return self in (MountParent.LEFT_ARM, MountParent.RIGHT_ARM)


@dataclass(frozen=True)
class JetMount:
    """One turbine attachment.

    Arm mounts hang off the reduced shoulder chain
    ``base * translate(shoulder_origin) * Ry(pitch) * Rx(roll) * fixed_transform``;
    jetpack mounts are rigid: ``base * fixed_transform * Ry(tilt)``.
    ``thrust_axis_local`` is the direction of the force applied to the body,
    expressed in the nozzle frame.
    """

    parent: MountParent
    fixed_transform: Transform = field(default_factory=Transform.identity)
    tilt: float = 0.0
    thrust_axis_local: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    shoulder_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        axis = np.asarray(self.thrust_axis_local, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if abs(norm - 1.0) > 1e-9:
            raise DomainError(f"thrust_axis_local must be unit norm, got |axis| = {norm}")
        object.__setattr__(self, "thrust_axis_local", axis)
        object.__setattr__(self, "shoulder_origin", np.asarray(self.shoulder_origin, dtype=float).reshape(3))
        if not self.parent.is_arm and np.any(self.shoulder_origin != 0.0):
            raise DomainError("jetpack mounts have no shoulder joint; shoulder_origin must be zero")


@dataclass(frozen=True)
class FootGeometry:
    """Contact corner points of one foot, base frame (rows of a (k, 3) array)."""

    corners: np.ndarray

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float).reshape(-1, 3)
        if corners.shape[0] < 1:
            raise DomainError("foot needs at least one contact point")
        object.__setattr__(self, "corners", corners)


@dataclass(frozen=True)
class RobotModel:
    mass: float
    inertia_body: np.ndarray
    gravity_accel: float
    jets: tuple[JetMount, ...]
    feet: tuple[FootGeometry, ...]
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_limits_lo: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, -np.pi / 2))
    joint_limits_hi: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, np.pi / 2))

    def __post_init__(self):
        if self.mass <= 0.0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if self.gravity_accel <= 0.0:
            raise DomainError(f"gravity_accel must be positive, got {self.gravity_accel}")
        inertia = np.asarray(self.inertia_body, dtype=float).reshape(3, 3)
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise DomainError("inertia_body must be symmetric")
        if np.any(np.linalg.eigvalsh(inertia) <= 0.0):
            raise DomainError("inertia_body must be positive definite")
        jets = tuple(self.jets)
        if len(jets) != N_JETS:
            raise DomainError(f"expected exactly {N_JETS} jets, got {len(jets)}")
        feet = tuple(self.feet)
        if len(feet) != 2:
            raise DomainError(f"expected exactly 2 feet, got {len(feet)}")
        lo = np.asarray(self.joint_limits_lo, dtype=float).reshape(N_JOINTS)
        hi = np.asarray(self.joint_limits_hi, dtype=float).reshape(N_JOINTS)
        if np.any(lo > hi):
            raise DomainError("joint_limits_lo must not exceed joint_limits_hi")
        object.__setattr__(self, "inertia_body", inertia)
        object.__setattr__(self, "jets", jets)
        object.__setattr__(self, "feet", feet)
        object.__setattr__(self, "com_offset", np.asarray(self.com_offset, dtype=float).reshape(3))
        object.__setattr__(self, "joint_limits_lo", lo)
        object.__setattr__(self, "joint_limits_hi", hi)
        # hot-path caches: inverse inertia, static jetpack poses, stacked foot corners
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(inertia))
        static = []
        for mount in jets:
            if mount.parent.is_arm:
                static.append(None)
            else:
                local = mount.fixed_transform.compose(Transform(rot=rot_y(mount.tilt)))
                static.append((local.pos.copy(), local.rot @ mount.thrust_axis_local))
        object.__setattr__(self, "_static_mounts", tuple(static))
        corners = np.vstack([foot.corners for foot in feet])
        foot_index = np.concatenate([np.full(foot.corners.shape[0], i) for i, foot in enumerate(feet)])
        object.__setattr__(self, "_all_corners", corners)
        object.__setattr__(self, "_corner_foot_index", foot_index)

    @property
    def weight(self) -> float:
        return self.mass * self.gravity_accel

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv


@dataclass(frozen=True)
class JointConfig:
    """Reduced joint vector: (left shoulder pitch, left roll, right pitch, right roll)."""

    angles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float).reshape(N_JOINTS))

    @staticmethod
    def zero() -> "JointConfig":
        return JointConfig(np.zeros(N_JOINTS))


PITCH_GUARD_DEFAULT = 0.2


@dataclass(frozen=True)
class CentroidalState:
    """CoM position/momentum plus base orientation/angular momentum (world frame)."""

    com_position: np.ndarray
    lin_momentum: np.ndarray
    euler_zyx: np.ndarray  # (yaw, pitch, roll)
    ang_momentum: np.ndarray  # about the CoM, world frame

    def __post_init__(self):
        for name in ("com_position", "lin_momentum", "euler_zyx", "ang_momentum"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.com_position, self.lin_momentum, self.euler_zyx, self.ang_momentum])

    @staticmethod
    def from_vector(x: np.ndarray) -> "CentroidalState":
        x = np.asarray(x, dtype=float).reshape(12)
        return CentroidalState(x[0:3], x[3:6], x[6:9], x[9:12])

    def pitch_within_guard(self, guard: float = PITCH_GUARD_DEFAULT) -> bool:
        return abs(self.euler_zyx[1]) < np.pi / 2 - guard


@dataclass(frozen=True)
class AllocationMatrix:
    """6x4 map from thrust intensities to the centroidal wrench.

    Column i is [axis_i ; (p_i - com) x axis_i], world frame.
    """

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(6, N_JETS)
        object.__setattr__(self, "a", a)

    @property
    def force_block(self) -> np.ndarray:
        return self.a[:3]

    @property
    def torque_block(self) -> np.ndarray:
        return self.a[3:]


def _check_joints(model: RobotModel, q: JointConfig) -> None:
    if np.any(q.angles < model.joint_limits_lo - 1e-12) or np.any(q.angles > model.joint_limits_hi + 1e-12):
        raise DomainError(
            f"joint angles {q.angles} outside limits [{model.joint_limits_lo}, {model.joint_limits_hi}]"
        )


def _mount_local_transform(mount: JetMount, q: JointConfig) -> Transform:
    """Base-frame pose of the nozzle frame."""
    if mount.parent.is_arm:
        pitch_idx, roll_idx = _ARM_JOINTS[mount.parent.value]
        shoulder = Transform(rot=rot_y(q.angles[pitch_idx]) @ rot_x(q.angles[roll_idx]), pos=mount.shoulder_origin)
        return shoulder.compose(mount.fixed_transform)
    return mount.fixed_transform.compose(Transform(rot=rot_y(mount.tilt)))


def jet_world_poses(
    model: RobotModel, q: JointConfig, base_pose: Transform
) -> list[tuple[np.ndarray, np.ndarray]]:
    """World position and unit thrust axis of each nozzle.

    Jetpack poses do not depend on q. Raises DomainError when q violates the
    configured joint limits.
    """
    _check_joints(model, q)
    poses = []
    for mount in model.jets:
        world = base_pose.compose(_mount_local_transform(mount, q))
        poses.append((world.pos.copy(), world.rot @ mount.thrust_axis_local))
    return poses


def allocation_matrix(
    model: RobotModel, q: JointConfig, base_pose: Transform, com: np.ndarray
) -> AllocationMatrix:
    com = np.asarray(com, dtype=float).reshape(3)
    a = np.empty((6, N_JETS))
    for i, (pos, axis) in enumerate(jet_world_poses(model, q, base_pose)):
        a[:3, i] = axis
        a[3:, i] = np.cross(pos - com, axis)
    return AllocationMatrix(a)


def centroidal_rhs(
    a: AllocationMatrix, thrusts: np.ndarray, model: RobotModel, alpha: float
) -> np.ndarray:
    """Centroidal momentum rate: jet wrench plus alpha-scaled gravity.

    At alpha = 1 this is the free-flight dynamics; alpha < 1 stands in for
    ground support during take-off. Returns (force N, torque N*m about CoM).
    """
    thrusts = np.asarray(thrusts, dtype=float).reshape(N_JETS)
    if np.any(thrusts < 0.0):
        raise DomainError(f"thrusts must be nonnegative, got {thrusts}")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    rhs = a.a @ thrusts
    rhs[2] -= alpha * model.weight
    return rhs


def _joint_world_axes(
    model: RobotModel, q: JointConfig, base_pose: Transform
) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """(joint index, world axis, world joint origin) for every arm joint."""
    out = []
    for mount in model.jets:
        if not mount.parent.is_arm:
            continue
        pitch_idx, roll_idx = _ARM_JOINTS[mount.parent.value]
        origin = base_pose.apply(mount.shoulder_origin)
        pitch_axis = base_pose.rot @ np.array([0.0, 1.0, 0.0])
        roll_axis = base_pose.rot @ rot_y(q.angles[pitch_idx]) @ np.array([1.0, 0.0, 0.0])
        out.append((pitch_idx, pitch_axis, origin))
        out.append((roll_idx, roll_axis, origin))
    return out


def linearize_allocation(
    model: RobotModel,
    q: JointConfig,
    base_pose: Transform,
    com: np.ndarray,
    thrusts: np.ndarray,
) -> np.ndarray:
    """Analytic Jacobian of the wrench A(q) @ T with respect to q (6x4).

    For a revolute joint with world axis w and origin o moving jet i:
    d(axis)/dq = w x axis, d(p)/dq = w x (p - o). Jetpack columns contribute
    nothing (structurally independent of q).
    """
    com = np.asarray(com, dtype=float).reshape(3)
    thrusts = np.asarray(thrusts, dtype=float).reshape(N_JETS)
    poses = jet_world_poses(model, q, base_pose)
    jac = np.zeros((6, N_JOINTS))
    joint_axes = _joint_world_axes(model, q, base_pose)
    for i, mount in enumerate(model.jets):
        if not mount.parent.is_arm or thrusts[i] == 0.0:
            continue
        pitch_idx, roll_idx = _ARM_JOINTS[mount.parent.value]
        pos, axis = poses[i]
        for j, w, origin in joint_axes:
            if j not in (pitch_idx, roll_idx):
                continue
            d_axis = np.cross(w, axis)
            d_pos = np.cross(w, pos - origin)
            jac[:3, j] += thrusts[i] * d_axis
            jac[3:, j] += thrusts[i] * (np.cross(d_pos, axis) + np.cross(pos - com, d_axis))
    return jac


def _shoulder_rotation(pitch: float, roll: float) -> np.ndarray:
    """Ry(pitch) @ Rx(roll) in closed form (hot path)."""
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    return np.array(
        [
            [cp, sp * sr, sp * cr],
            [0.0, cr, -sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def jet_world_arrays(model: RobotModel, q_angles: np.ndarray, rot: np.ndarray, pos: np.ndarray):
    """Raw-array jet kinematics for the simulation hot path.

    Returns (positions (4, 3), axes (4, 3)) in world frame. Semantics match
    jet_world_poses but skip Transform construction and joint-limit checks.
    """
    local_pos = np.empty((4, 3))
    local_axis = np.empty((4, 3))
    for i, mount in enumerate(model.jets):
        static = model._static_mounts[i]
        if static is None:
            pitch_idx, roll_idx = _ARM_JOINTS[mount.parent.value]
            shoulder_rot = _shoulder_rotation(q_angles[pitch_idx], q_angles[roll_idx])
            local_pos[i] = mount.shoulder_origin + shoulder_rot @ mount.fixed_transform.pos
            local_axis[i] = shoulder_rot @ (mount.fixed_transform.rot @ mount.thrust_axis_local)
        else:
            local_pos[i], local_axis[i] = static
    return pos + local_pos @ rot.T, local_axis @ rot.T


def gravity_wrench(model: RobotModel, alpha: float) -> np.ndarray:
    """The alpha-scaled gravity contribution: (0, 0, -alpha*m*g, 0, 0, 0)."""
    out = np.zeros(6)
    out[2] = -alpha * model.weight
    return out


def world_inertia(model: RobotModel, rot: np.ndarray) -> np.ndarray:
    """Body inertia expressed in the world frame: R I R^T."""
    return rot @ model.inertia_body @ rot.T


def foot_corner_points(model: RobotModel, base_pose: Transform) -> list[np.ndarray]:
    """World-frame contact corner arrays, one (k, 3) block per foot."""
    return [
        base_pose.pos + foot.corners @ base_pose.rot.T
        for foot in model.feet
    ]


def default_robot_model(
    mass: float = 40.0,
    inertia_diag: tuple[float, float, float] = (2.0, 1.5, 1.0),
    gravity_accel: float = 9.81,
    jetpack_tilt: float = np.deg2rad(10.0),
    com_offset: tuple[float, float, float] | None = None,
) -> RobotModel:
    """Reference configuration: values are plausible, not hardware ground truth.

    Geometry admits an exact four-thrust hover trim at q = 0: arms reach
    forward with a counter-tilt equal and opposite to the jetpack tilt, so
    equal thrusts cancel the lateral components, and the default CoM sits at
    the thrust centroid (pitch moments balance).
    """
    arm_jet_offset = np.array([0.18, 0.08, -0.25])  # forward of the elbow, exhaust down
    shoulder_half_span = 0.15
    shoulder_height = 0.35
    jetpack_offset = np.array([-0.18, 0.11, 0.05])
    arm_jet_z = shoulder_height + arm_jet_offset[2]
    jets = (
        JetMount(
            parent=MountParent.LEFT_ARM,
            fixed_transform=Transform(rot=rot_y(-jetpack_tilt), pos=arm_jet_offset * np.array([1.0, 1.0, 1.0])),
            shoulder_origin=np.array([0.0, shoulder_half_span, shoulder_height]),
        ),
        JetMount(
            parent=MountParent.RIGHT_ARM,
            fixed_transform=Transform(rot=rot_y(-jetpack_tilt), pos=arm_jet_offset * np.array([1.0, -1.0, 1.0])),
            shoulder_origin=np.array([0.0, -shoulder_half_span, shoulder_height]),
        ),
        JetMount(
            parent=MountParent.JETPACK_LEFT,
            fixed_transform=Transform(pos=jetpack_offset * np.array([1.0, 1.0, 1.0])),
            tilt=jetpack_tilt,
        ),
        JetMount(
            parent=MountParent.JETPACK_RIGHT,
            fixed_transform=Transform(pos=jetpack_offset * np.array([1.0, -1.0, 1.0])),
            tilt=jetpack_tilt,
        ),
    )
    if com_offset is None:
        # thrust centroid in x: equal thrusts then produce zero pitch moment
        x_arm = arm_jet_offset[0]
        x_jet = jetpack_offset[0]
        com_x = (x_arm + x_jet) / 2.0 - np.tan(jetpack_tilt) * (jetpack_offset[2] - arm_jet_z) / 2.0
        com_offset = (com_x, 0.0, 0.05)
    foot_x, foot_y = 0.07, 0.04  # half-extents of each sole
    base_to_sole = -0.55
    feet = tuple(
        FootGeometry(
            corners=np.array(
                [
                    [dx, side * 0.1 + dy, base_to_sole]
                    for dx in (-foot_x, foot_x)
                    for dy in (-foot_y, foot_y)
                ]
            )
        )
        for side in (1.0, -1.0)
    )
    return RobotModel(
        mass=mass,
        inertia_body=np.diag(inertia_diag),
        gravity_accel=gravity_accel,
        jets=jets,
        feet=feet,
        com_offset=np.array(com_offset),
    )
