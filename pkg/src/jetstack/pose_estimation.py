"""Base pose/velocity estimation at 200 Hz fusing IMU and VIO-like samples.

Error-state (multiplicative quaternion) formulation: the generic UKF engine
filters the flat 12-dim error vector (dp, dtheta, dv, domega) around a nominal
BaseState; orientation errors live in the tangent chart q = q_nom * exp(dtheta).
The process model is constant-velocity kinematics with random-walk velocities;
the IMU contributes orientation + gyro only, VIO contributes the full state.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .ukf import GaussianBelief, SigmaParams, ukf_predict, ukf_update
from .geometry import (
    quat_conjugate,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    quat_to_rotvec,
)

POSE_RATE_HZ = 200.0
POSE_DT = 1.0 / POSE_RATE_HZ
ERROR_DIM = 12  # (dp, dtheta, dv, domega)


@dataclass(frozen=True)
class BaseState:
    """Base pose and twist; orientation rotates base-frame vectors into world."""

    position: np.ndarray
    orientation: np.ndarray  # unit quaternion, wxyz, canonical w >= 0
    lin_velocity: np.ndarray  # world frame
    ang_velocity: np.ndarray  # body frame

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise NumericError(f"quaternion norm drifted: |q| = {np.linalg.norm(q)}")
        object.__setattr__(self, "orientation", quat_normalize(q))
        object.__setattr__(self, "lin_velocity", np.asarray(self.lin_velocity, dtype=float).reshape(3))
        object.__setattr__(self, "ang_velocity", np.asarray(self.ang_velocity, dtype=float).reshape(3))

    @staticmethod
    def at_rest(position=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0)) -> "BaseState":
        return BaseState(np.asarray(position, float), np.asarray(orientation, float), np.zeros(3), np.zeros(3))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)


@dataclass(frozen=True)
class ImuSample:
    orientation: np.ndarray
    ang_velocity: np.ndarray  # body frame, rad/s

    def __post_init__(self):
        object.__setattr__(self, "orientation", quat_normalize(np.asarray(self.orientation, float).reshape(4)))
        object.__setattr__(self, "ang_velocity", np.asarray(self.ang_velocity, float).reshape(3))


@dataclass(frozen=True)
class VioSample:
    position: np.ndarray
    orientation: np.ndarray
    lin_velocity: np.ndarray
    ang_velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(3))
        object.__setattr__(self, "orientation", quat_normalize(np.asarray(self.orientation, float).reshape(4)))
        object.__setattr__(self, "lin_velocity", np.asarray(self.lin_velocity, float).reshape(3))
        object.__setattr__(self, "ang_velocity", np.asarray(self.ang_velocity, float).reshape(3))


@dataclass(frozen=True)
class PoseBelief:
    """Nominal state plus the Gaussian error-state belief the UKF engine sees."""

    nominal: BaseState
    error: GaussianBelief

    def fused_state(self) -> BaseState:
        """Nominal with the current error mean injected."""
        mean = self.error.mean
        return BaseState(
            position=self.nominal.position + mean[0:3],
            orientation=quat_multiply(self.nominal.orientation, quat_from_rotvec(mean[3:6])),
            lin_velocity=self.nominal.lin_velocity + mean[6:9],
            ang_velocity=self.nominal.ang_velocity + mean[9:12],
        )

    def reset(self) -> "PoseBelief":
        """Inject the error mean into the nominal and zero it (chart re-centering)."""
        return PoseBelief(self.fused_state(), GaussianBelief(np.zeros(ERROR_DIM), self.error.covariance))


def initial_pose_belief(state: BaseState, position_std=0.05, angle_std=0.02, vel_std=0.05, gyro_std=0.05) -> PoseBelief:
    cov = np.diag(
        np.concatenate(
            [
                np.full(3, position_std**2),
                np.full(3, angle_std**2),
                np.full(3, vel_std**2),
                np.full(3, gyro_std**2),
            ]
        )
    )
    return PoseBelief(state, GaussianBelief(np.zeros(ERROR_DIM), cov))


def default_process_noise(dt: float = POSE_DT) -> np.ndarray:
    """Random-walk velocity PSDs scaled to the tick length."""
    return np.diag(
        np.concatenate(
            [
                np.full(3, 1e-8),
                np.full(3, 1e-8),
                np.full(3, 0.25),
                np.full(3, 0.25),
            ]
        )
        * dt
    )


def default_imu_noise(orientation_std: float = 0.01, gyro_std: float = 0.02) -> np.ndarray:
    return np.diag(np.concatenate([np.full(3, orientation_std**2), np.full(3, gyro_std**2)]))


def default_vio_noise(
    position_std: float = 0.01,
    orientation_std: float = 0.02,
    vel_std: float = 0.02,
    gyro_std: float = 0.05,
) -> np.ndarray:
    return np.diag(
        np.concatenate(
            [
                np.full(3, position_std**2),
                np.full(3, orientation_std**2),
                np.full(3, vel_std**2),
                np.full(3, gyro_std**2),
            ]
        )
    )


_SIGMA = SigmaParams()


def _advance(position, orientation, lin_velocity, ang_velocity, dt):
    """Constant-velocity kinematics; works on (..., k) stacked arrays."""
    new_pos = position + lin_velocity * dt
    new_q = quat_multiply(orientation, quat_from_rotvec(ang_velocity * dt))
    return new_pos, new_q


def pose_predict(belief: PoseBelief, dt: float, q_noise: np.ndarray | None = None) -> PoseBelief:
    """Propagate nominal and error belief by one tick (nominal dt = 1/200 s)."""
    if q_noise is None:
        q_noise = default_process_noise(dt)
    nom = belief.nominal
    nom_pos, nom_q = _advance(nom.position, nom.orientation, nom.lin_velocity, nom.ang_velocity, dt)
    nom_q = quat_normalize(nom_q)
    if abs(np.linalg.norm(nom_q) - 1.0) > 1e-6:
        raise NumericError("nominal quaternion norm drifted beyond 1e-6")
    nom_q_inv = quat_conjugate(nom_q)

    def process(delta: np.ndarray, _dt: float) -> np.ndarray:
        pos = nom.position + delta[..., 0:3]
        q = quat_multiply(nom.orientation, quat_from_rotvec(delta[..., 3:6]))
        vel = nom.lin_velocity + delta[..., 6:9]
        omega = nom.ang_velocity + delta[..., 9:12]
        new_pos, new_q = _advance(pos, q, vel, omega, _dt)
        out = np.empty_like(delta)
        out[..., 0:3] = new_pos - nom_pos
        out[..., 3:6] = quat_to_rotvec(quat_multiply(nom_q_inv, new_q))
        out[..., 6:9] = delta[..., 6:9]
        out[..., 9:12] = delta[..., 9:12]
        return out

    process.vectorized = True
    error = ukf_predict(belief.error, process, q_noise, dt, _SIGMA)
    new_nominal = BaseState(nom_pos, nom_q, nom.lin_velocity, nom.ang_velocity)
    return PoseBelief(new_nominal, error)


def _orientation_chart(nominal_q: np.ndarray, measured_q: np.ndarray) -> np.ndarray:
    """Measured orientation expressed in the nominal tangent chart."""
    return quat_to_rotvec(quat_multiply(quat_conjugate(nominal_q), measured_q))


def pose_update_imu(belief: PoseBelief, sample: ImuSample, r_imu: np.ndarray | None = None) -> PoseBelief:
    """Update on (orientation chart, body angular velocity)."""
    if r_imu is None:
        r_imu = default_imu_noise()
    nom = belief.nominal
    z = np.concatenate([_orientation_chart(nom.orientation, sample.orientation), sample.ang_velocity])

    def h(delta: np.ndarray) -> np.ndarray:
        return np.concatenate([delta[..., 3:6], nom.ang_velocity + delta[..., 9:12]], axis=-1)

    h.vectorized = True
    error, _, _ = ukf_update(belief.error, z, h, r_imu, _SIGMA)
    return PoseBelief(nom, error).reset()


def pose_update_vio(belief: PoseBelief, sample: VioSample, r_vio: np.ndarray | None = None) -> PoseBelief:
    """Full-state update: position, orientation chart, linear and angular velocity."""
    if r_vio is None:
        r_vio = default_vio_noise()
    nom = belief.nominal
    z = np.concatenate(
        [
            sample.position,
            _orientation_chart(nom.orientation, sample.orientation),
            sample.lin_velocity,
            sample.ang_velocity,
        ]
    )

    def h(delta: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [
                nom.position + delta[..., 0:3],
                delta[..., 3:6],
                nom.lin_velocity + delta[..., 6:9],
                nom.ang_velocity + delta[..., 9:12],
            ],
            axis=-1,
        )

    h.vectorized = True
    error, _, _ = ukf_update(belief.error, z, h, r_vio, _SIGMA)
    return PoseBelief(nom, error).reset()


def estimated_com(base: BaseState, q, model) -> np.ndarray:
    """CoM position: base plus the rotated constant base-to-CoM offset."""
    return base.position + quat_rotate(base.orientation, model.com_offset)


class PoseEstimator:
    """200 Hz fusion loop: one fused BaseState per tick, VIO queued between ticks.

    Single-writer: tick() must be called from one thread; snapshots returned
    are immutable values.
    """

    def __init__(
        self,
        initial: BaseState,
        q_noise: np.ndarray | None = None,
        r_imu: np.ndarray | None = None,
        r_vio: np.ndarray | None = None,
        dt: float = POSE_DT,
    ):
        self.belief = initial_pose_belief(initial)
        self.dt = dt
        self.q_noise = default_process_noise(dt) if q_noise is None else q_noise
        self.r_imu = default_imu_noise() if r_imu is None else r_imu
        self.r_vio = default_vio_noise() if r_vio is None else r_vio
        self._vio_queue: deque[VioSample] = deque()
        self.tick_count = 0
        self.last_update_time = 0.0
        self._cached_state = self.belief.fused_state()

    def submit_vio(self, sample: VioSample) -> None:
        self._vio_queue.append(sample)

    def tick(self, imu: ImuSample | None, time_s: float | None = None) -> BaseState:
        """Predict + IMU update + at most one queued VIO sample; returns the fused state."""
        self.belief = pose_predict(self.belief, self.dt, self.q_noise)
        if imu is not None:
            self.belief = pose_update_imu(self.belief, imu, self.r_imu)
        if self._vio_queue:
            self.belief = pose_update_vio(self.belief, self._vio_queue.popleft(), self.r_vio)
        self.tick_count += 1
        if time_s is not None:
            self.last_update_time = time_s
        self._cached_state = self.belief.fused_state()
        return self._cached_state

    @property
    def state(self) -> BaseState:
        return self._cached_state

    @property
    def covariance_diagonal(self) -> np.ndarray:
        return np.diag(self.belief.error.covariance).copy()
