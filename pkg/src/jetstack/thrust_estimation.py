"""Per-turbine thrust estimation: FT + RPM fused through the jet model UKF.

Each turbine gets an independent 3-state filter over (thrust, thrust rate,
FT axis bias). The process is the second-order jet model with the throttle
zero-order-held and a random-walk bias; the update fuses two scalar channels:
the FT force projected on the thrust axis (measures T + bias) and the
RPM-derived thrust (measures T). Turbines are dynamically uncoupled, so four
small filters condition better than one stacked 12-state filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .jets import T_MAX, JetCoefficients, U_MAX
from .model import JetMount
from .ukf import GaussianBelief, SigmaParams, ukf_predict, ukf_update

RPM_MAX = 130000.0
THRUST_TICK_DT = 0.01  # 100 Hz


@dataclass(frozen=True)
class FtReading:
    """Force-torque sample in the jet mount sensor frame.

    ``bias`` is simulator-side metadata (the injected offset); estimation code
    must treat the reading as biased and never touch this field.
    """

    force: np.ndarray
    torque: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("force", "torque", "bias"):
            value = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(value)):
                raise DomainError(f"non-finite FT {name}: {value}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class RpmReading:
    rpm: float

    def __post_init__(self):
        if not 0.0 <= self.rpm <= RPM_MAX:
            raise DomainError(f"rpm {self.rpm} outside [0, {RPM_MAX}]")


@dataclass(frozen=True)
class RpmThrustMap:
    """Static quadratic map thrust = k2 * rpm^2, calibrated so map(rpm_max) = T_MAX."""

    k2: float = T_MAX / RPM_MAX**2

    def thrust(self, rpm: float) -> float:
        return float(np.clip(self.k2 * rpm * rpm, 0.0, T_MAX))

    def rpm(self, thrust: float) -> float:
        return float(np.sqrt(np.clip(thrust, 0.0, T_MAX) / self.k2))


def ft_to_thrust_intensity(reading: FtReading, mount: JetMount) -> float:
    """Projection of the measured force onto the known thrust axis (bias-uncorrected)."""
    return float(reading.force @ mount.thrust_axis_local)


def rpm_to_thrust(rpm: RpmReading, map_coeffs: RpmThrustMap) -> float:
    return map_coeffs.thrust(rpm.rpm)


_SIGMA = SigmaParams()

_H_MATRIX = np.array([[1.0, 0.0, 1.0], [1.0, 0.0, 0.0]])  # rows: FT projection, RPM thrust


def _measurement(x: np.ndarray) -> np.ndarray:
    return x @ _H_MATRIX.T


_measurement.vectorized = True


def thrust_process_noise(dt: float = THRUST_TICK_DT) -> np.ndarray:
    # thrust-acceleration PSD absorbs model error; bias is a slow random walk
    return np.diag(np.array([1.0, 400.0, 1e-3]) * dt)


def thrust_measurement_noise(ft_std: float = 2.0, rpm_thrust_std: float = 5.0) -> np.ndarray:
    return np.diag([ft_std**2, rpm_thrust_std**2])


def initial_thrust_belief(thrust: float = 0.0, bias_std: float = 5.0) -> GaussianBelief:
    return GaussianBelief(np.array([thrust, 0.0, 0.0]), np.diag([25.0, 25.0, bias_std**2]))


def thrust_estimate_step(
    belief: GaussianBelief,
    u: float,
    ft_projection: float,
    rpm_thrust: float,
    coeffs: JetCoefficients,
    dt: float = THRUST_TICK_DT,
    q_noise: np.ndarray | None = None,
    r_noise: np.ndarray | None = None,
) -> tuple[GaussianBelief, float, float]:
    """One predict/update cycle; returns (belief, clamped point estimate, NIS)."""
    if not 0.0 <= u <= U_MAX:
        raise DomainError(f"throttle {u} outside [0, {U_MAX}]")
    if q_noise is None:
        q_noise = thrust_process_noise(dt)
    if r_noise is None:
        r_noise = thrust_measurement_noise()

    def process(x: np.ndarray, step_dt: float) -> np.ndarray:
        thrust, rate, bias = x[..., 0], x[..., 1], x[..., 2]
        accel = coeffs.a1 * thrust + coeffs.a2 * rate + coeffs.b1 * u + coeffs.b2 * u * u + coeffs.c
        new_rate = rate + step_dt * accel
        new_thrust = thrust + step_dt * new_rate
        low = new_thrust < 0.0
        high = new_thrust > T_MAX
        new_thrust = np.clip(new_thrust, 0.0, T_MAX)
        new_rate = np.where(low, np.maximum(new_rate, 0.0), new_rate)
        new_rate = np.where(high, np.minimum(new_rate, 0.0), new_rate)
        return np.stack([new_thrust, new_rate, bias], axis=-1)

    process.vectorized = True
    predicted = ukf_predict(belief, process, q_noise, dt, _SIGMA)
    z = np.array([ft_projection, rpm_thrust])
    posterior, innovation, innovation_cov = ukf_update(predicted, z, _measurement, r_noise, _SIGMA)
    nis = float(innovation @ np.linalg.solve(innovation_cov, innovation))
    estimate = max(float(posterior.mean[0]), 0.0)
    return posterior, estimate, nis


class ThrustEstimator:
    """Bank of four independent per-turbine filters ticked at 100 Hz.

    Instances are single-writer; turbines may be ticked in parallel threads
    because their beliefs never touch.
    """

    def __init__(
        self,
        coeffs: JetCoefficients,
        mounts,
        rpm_map: RpmThrustMap | None = None,
        q_noise: np.ndarray | None = None,
        r_noise: np.ndarray | None = None,
        dt: float = THRUST_TICK_DT,
    ):
        self.coeffs = coeffs
        self.mounts = list(mounts)
        self.rpm_map = rpm_map if rpm_map is not None else RpmThrustMap()
        self.q_noise = thrust_process_noise(dt) if q_noise is None else q_noise
        self.r_noise = thrust_measurement_noise() if r_noise is None else r_noise
        self.dt = dt
        self.beliefs = [initial_thrust_belief(coeffs.idle_thrust) for _ in self.mounts]
        self.estimates = np.full(len(self.mounts), coeffs.idle_thrust, dtype=float)
        self.nis = np.zeros(len(self.mounts))
        self.tick_count = 0

    def step(self, throttles: np.ndarray, ft_readings, rpm_readings) -> np.ndarray:
        throttles = np.asarray(throttles, dtype=float).reshape(len(self.mounts))
        for i, mount in enumerate(self.mounts):
            ft_proj = ft_to_thrust_intensity(ft_readings[i], mount)
            rpm_thrust = rpm_to_thrust(rpm_readings[i], self.rpm_map)
            self.beliefs[i], self.estimates[i], self.nis[i] = thrust_estimate_step(
                self.beliefs[i],
                float(throttles[i]),
                ft_proj,
                rpm_thrust,
                self.coeffs,
                self.dt,
                self.q_noise,
                self.r_noise,
            )
        self.tick_count += 1
        return self.estimates.copy()

    def covariance_traces(self) -> np.ndarray:
        return np.array([np.trace(b.covariance) for b in self.beliefs])

    def rates(self) -> np.ndarray:
        return np.array([b.mean[1] for b in self.beliefs])

    def biases(self) -> np.ndarray:
        return np.array([b.mean[2] for b in self.beliefs])
