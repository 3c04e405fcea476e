"""Per-turbine thrust filter: measurement maps, convergence, bias observability."""

import numpy as np
import pytest
from scipy.stats import chi2

from jetstack.errors import DomainError
from jetstack.jets import JetState, jet_step, reference_coefficients
from jetstack.model import default_robot_model
from jetstack.thrust_estimation import (
    RPM_MAX,
    FtReading,
    RpmReading,
    RpmThrustMap,
    ThrustEstimator,
    ft_to_thrust_intensity,
    initial_thrust_belief,
    rpm_to_thrust,
    thrust_estimate_step,
    thrust_measurement_noise,
)

COEFFS = reference_coefficients()
MODEL = default_robot_model()
MOUNT = MODEL.jets[0]
RPM_MAP = RpmThrustMap()


class TestFtProjection:
    def test_force_along_axis(self):
        reading = FtReading(100.0 * MOUNT.thrust_axis_local, np.zeros(3))
        assert abs(ft_to_thrust_intensity(reading, MOUNT) - 100.0) < 1e-12

    def test_force_orthogonal_to_axis(self):
        axis = MOUNT.thrust_axis_local
        ortho = np.cross(axis, [1.0, 0.0, 0.0])
        ortho /= np.linalg.norm(ortho)
        reading = FtReading(50.0 * ortho, np.zeros(3))
        assert abs(ft_to_thrust_intensity(reading, MOUNT)) < 1e-12

    def test_random_force_equals_dot_product(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            force = rng.normal(size=3) * 40.0
            reading = FtReading(force, rng.normal(size=3))
            assert abs(ft_to_thrust_intensity(reading, MOUNT) - force @ MOUNT.thrust_axis_local) < 1e-12


class TestRpmMap:
    def test_zero_rpm(self):
        assert rpm_to_thrust(RpmReading(0.0), RPM_MAP) == 0.0

    def test_calibration_endpoint(self):
        assert abs(rpm_to_thrust(RpmReading(RPM_MAX), RPM_MAP) - 250.0) < 1e-9

    def test_mid_rpm_arithmetic(self):
        rpm = 65000.0
        assert abs(rpm_to_thrust(RpmReading(rpm), RPM_MAP) - RPM_MAP.k2 * rpm**2) < 1e-9

    def test_rpm_bounds(self):
        with pytest.raises(DomainError):
            RpmReading(-1.0)
        with pytest.raises(DomainError):
            RpmReading(RPM_MAX + 1.0)


def simulate_truth(u_profile, dt=0.01):
    state = JetState(COEFFS.idle_thrust, 0.0)
    out = []
    for u in u_profile:
        out.append(state.thrust)
        state = jet_step(state, float(u), COEFFS, dt)
    return np.array(out)


def run_estimator(u_profile, truth, ft_std=0.0, rpm_std=0.0, bias=0.0, seed=0):
    rng = np.random.default_rng(seed)
    belief = initial_thrust_belief(truth[0])
    estimates, nis_values, biases = [], [], []
    for k, u in enumerate(u_profile):
        ft = truth[k] + bias + (rng.normal(0.0, ft_std) if ft_std else 0.0)
        rpm = truth[k] + (rng.normal(0.0, rpm_std) if rpm_std else 0.0)
        belief, estimate, nis = thrust_estimate_step(belief, float(u), ft, max(rpm, 0.0), COEFFS)
        estimates.append(estimate)
        nis_values.append(nis)
        biases.append(belief.mean[2])
    return np.array(estimates), np.array(nis_values), np.array(biases)


class TestEstimateStep:
    def test_noiseless_convergence_within_half_newton(self):
        u = np.concatenate([np.full(100, 30.0), np.full(200, 60.0)])
        truth = simulate_truth(u)
        estimates, _, _ = run_estimator(u, truth)
        # after 1 s of convergence
        assert np.max(np.abs(estimates[100:] - truth[100:])) < 0.5

    def test_ft_bias_recovered_by_rpm_disambiguation(self):
        u = np.tile(np.concatenate([np.full(150, 40.0), np.full(150, 70.0)]), 4)
        truth = simulate_truth(u)
        for seed in range(10):
            _, _, biases = run_estimator(u, truth, ft_std=2.0, rpm_std=5.0, bias=5.0, seed=seed)
            assert abs(biases[-1] - 5.0) < 1.0, f"seed {seed}: bias {biases[-1]}"

    def test_frozen_equilibrium_is_stationary(self):
        u_eq = 50.0
        t_eq = COEFFS.equilibrium_thrust(u_eq)
        belief = initial_thrust_belief(t_eq)
        for _ in range(100):
            belief, estimate, _ = thrust_estimate_step(belief, u_eq, t_eq, t_eq, COEFFS)
        assert abs(estimate - t_eq) < 0.1

    def test_estimate_clamped_nonnegative(self):
        belief = initial_thrust_belief(0.0)
        belief, estimate, _ = thrust_estimate_step(belief, 0.0, -30.0, 0.0, COEFFS)
        assert estimate >= 0.0

    def test_rms_error_under_nominal_noise(self):
        """Fused error RMS at most twice the better channel's std (FT, 2 N)."""
        u = np.concatenate([np.full(200, 30.0), np.full(200, 55.0), np.full(200, 80.0)])
        truth = simulate_truth(u)
        estimates, _, _ = run_estimator(u, truth, ft_std=2.0, rpm_std=5.0, seed=3)
        rms = np.sqrt(np.mean((estimates[100:] - truth[100:]) ** 2))
        assert rms <= 4.0

    def test_invariant_to_torque_component(self):
        estimator_a = ThrustEstimator(COEFFS, MODEL.jets)
        estimator_b = ThrustEstimator(COEFFS, MODEL.jets)
        rng = np.random.default_rng(4)
        for _ in range(50):
            force = 30.0 * MOUNT.thrust_axis_local
            ft_a = [FtReading(force, np.zeros(3)) for _ in range(4)]
            ft_b = [FtReading(force, rng.normal(size=3) * 5.0) for _ in range(4)]
            rpm = [RpmReading(RPM_MAP.rpm(30.0)) for _ in range(4)]
            ea = estimator_a.step(np.full(4, 30.0), ft_a, rpm)
            eb = estimator_b.step(np.full(4, 30.0), ft_b, rpm)
            assert np.array_equal(ea, eb)


class TestNisConsistency:
    def test_nis_within_chi2_band_over_monte_carlo(self):
        """Model-consistent truth (process noise injected): run-averaged NIS in the 95% band."""
        runs, steps, dim = 50, 150, 2
        r = thrust_measurement_noise()
        from jetstack.thrust_estimation import thrust_process_noise

        q = thrust_process_noise()
        nis = np.zeros((runs, steps))
        for run in range(runs):
            rng = np.random.default_rng(100 + run)
            belief = initial_thrust_belief(COEFFS.equilibrium_thrust(40.0))
            truth = np.array([COEFFS.equilibrium_thrust(40.0), 0.0, 0.0])
            truth += rng.multivariate_normal(np.zeros(3), belief.covariance)
            u = 40.0
            for k in range(steps):
                accel = COEFFS.a1 * truth[0] + COEFFS.a2 * truth[1] + COEFFS.b1 * u + COEFFS.b2 * u * u + COEFFS.c
                truth[1] += 0.01 * accel
                truth[0] += 0.01 * truth[1]
                truth += rng.multivariate_normal(np.zeros(3), q)
                z_ft = truth[0] + truth[2] + rng.normal(0.0, np.sqrt(r[0, 0]))
                z_rpm = truth[0] + rng.normal(0.0, np.sqrt(r[1, 1]))
                belief, _, nis_k = thrust_estimate_step(belief, u, z_ft, z_rpm, COEFFS)
                nis[run, k] = nis_k
        avg = nis.mean(axis=0)
        lo = chi2.ppf(0.025, runs * dim) / runs
        hi = chi2.ppf(0.975, runs * dim) / runs
        inside = np.mean((avg >= lo) & (avg <= hi))
        assert inside >= 0.9, f"only {inside:.0%} inside [{lo:.3f}, {hi:.3f}]"
        assert lo <= avg.mean() <= hi
