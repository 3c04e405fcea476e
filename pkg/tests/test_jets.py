"""Turbine model: stepping, linearization, identification, bench data."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetstack.errors import DomainError, IdentifiabilityError
from jetstack.jets import (
    T_MAX,
    JetCoefficients,
    JetState,
    ThrottleCommand,
    generate_bench_data,
    identify_coefficients,
    jet_linearize,
    jet_rhs,
    jet_step,
    read_bench_csv,
    reference_coefficients,
    write_bench_csv,
)

COEFFS = reference_coefficients()


def rk4_trajectory(thrust0, rate0, u, coeffs, duration, sample_dt, dt=1e-5):
    """High-resolution RK4 oracle for the unclamped ODE, sampled every sample_dt."""
    state = np.array([thrust0, rate0])
    sub = int(round(sample_dt / dt))
    samples = []
    for _ in range(int(round(duration / sample_dt))):
        for _ in range(sub):
            k1 = jet_rhs(state[0], state[1], u, coeffs)
            k2 = jet_rhs(*(state + 0.5 * dt * k1), u, coeffs)
            k3 = jet_rhs(*(state + 0.5 * dt * k2), u, coeffs)
            k4 = jet_rhs(*(state + dt * k3), u, coeffs)
            state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        samples.append(state.copy())
    return np.array(samples)


def rk4_reference(thrust0, rate0, u, coeffs, duration, dt=1e-4):
    return rk4_trajectory(thrust0, rate0, u, coeffs, duration, sample_dt=duration, dt=dt)[-1]


class TestJetStep:
    def test_equilibrium_is_fixed_point(self):
        for u in (0.0, 25.0, 50.0, 100.0):
            t_eq = COEFFS.equilibrium_thrust(u)
            state = jet_step(JetState(t_eq, 0.0), u, COEFFS, dt=0.01)
            assert abs(state.thrust - t_eq) < 1e-9
            assert abs(state.thrust_rate) < 1e-9

    def test_zero_throttle_holds_idle(self):
        state = JetState(COEFFS.idle_thrust, 0.0)
        for _ in range(200):
            state = jet_step(state, 0.0, COEFFS, dt=0.01)
        assert abs(state.thrust - COEFFS.idle_thrust) < 1e-6

    def test_step_response_matches_rk4_oracle(self):
        """u: 0 -> 50 at t=0; trajectory inside 0.5 N of an RK4 dt=1e-5 reference over 5 s."""
        dt = 0.01
        reference = rk4_trajectory(COEFFS.equilibrium_thrust(0.0), 0.0, 50.0, COEFFS, duration=5.0, sample_dt=dt)
        state = JetState(COEFFS.equilibrium_thrust(0.0), 0.0)
        worst = 0.0
        for ref_thrust, _ in reference:
            state = jet_step(state, 50.0, COEFFS, dt)
            worst = max(worst, abs(state.thrust - ref_thrust))
        assert worst < 0.5

    def test_halving_dt_reduces_error(self):
        """First-order integrator: halving dt shrinks the RK4-reference error by >= 1.8x."""
        ref, _ = rk4_reference(COEFFS.equilibrium_thrust(0.0), 0.0, 70.0, COEFFS, duration=2.0)

        def final_error(dt):
            state = JetState(COEFFS.equilibrium_thrust(0.0), 0.0)
            for _ in range(int(round(2.0 / dt))):
                state = jet_step(state, 70.0, COEFFS, dt)
            return abs(state.thrust - ref)

        assert final_error(0.02) / final_error(0.01) >= 1.8

    @given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=120))
    @settings(max_examples=40, deadline=None)
    def test_thrust_always_clamped(self, throttles):
        state = JetState(0.0, 0.0)
        for u in throttles:
            state = jet_step(state, u, COEFFS, dt=0.1)
            assert 0.0 <= state.thrust <= T_MAX

    def test_equilibrium_map_monotone(self):
        values = [COEFFS.equilibrium_thrust(u) for u in np.linspace(0.0, 100.0, 101)]
        assert np.all(np.diff(values) >= 0.0)

    def test_reference_targets(self):
        assert abs(COEFFS.equilibrium_thrust(0.0) - 8.0) < 1e-9
        assert abs(COEFFS.equilibrium_thrust(100.0) - 220.0) < 1e-9
        # 0 -> 200 N rise time (10% to 90% of the final value) about 2.5 s
        u = COEFFS.equilibrium_throttle(200.0)
        final = COEFFS.equilibrium_thrust(u)
        state = JetState(0.0, 0.0)
        t10 = t90 = None
        for k in range(4000):
            state = jet_step(state, u, COEFFS, dt=0.005)
            if t10 is None and state.thrust >= 0.1 * final:
                t10 = k * 0.005
            if t90 is None and state.thrust >= 0.9 * final:
                t90 = k * 0.005
                break
        assert t90 is not None
        assert 1.5 < t90 - t10 < 3.5

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            jet_step(JetState(0.0, 0.0), 120.0, COEFFS, dt=0.01)
        with pytest.raises(DomainError):
            jet_step(JetState(0.0, 0.0), 10.0, COEFFS, dt=0.5)

    def test_unstable_coefficients_rejected(self):
        with pytest.raises(DomainError):
            JetCoefficients(a1=1.0, a2=-1.0, b1=1.0, b2=0.0, c=0.0)


class TestJetLinearize:
    def test_state_matrix_structure(self):
        a, _, _ = jet_linearize(JetState(40.0, 3.0), 30.0, COEFFS)
        assert np.allclose(a, [[0.0, 1.0], [COEFFS.a1, COEFFS.a2]])

    def test_linear_input_when_b2_zero(self):
        coeffs = JetCoefficients(a1=-2.0, a2=-3.0, b1=1.5, b2=0.0, c=0.0)
        for u in (0.0, 40.0, 90.0):
            _, b, _ = jet_linearize(JetState(10.0, 0.0), u, coeffs)
            assert np.allclose(b, [[0.0], [1.5]])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            thrust = rng.uniform(0.0, 240.0)
            rate = rng.uniform(-60.0, 60.0)
            u = rng.uniform(1.0, 99.0)
            a, b, affine = jet_linearize(JetState(thrust, rate), u, COEFFS)
            eps = 1e-6
            fd_a = np.column_stack(
                [
                    (jet_rhs(thrust + eps, rate, u, COEFFS) - jet_rhs(thrust - eps, rate, u, COEFFS)) / (2 * eps),
                    (jet_rhs(thrust, rate + eps, u, COEFFS) - jet_rhs(thrust, rate - eps, u, COEFFS)) / (2 * eps),
                ]
            )
            fd_b = ((jet_rhs(thrust, rate, u + eps, COEFFS) - jet_rhs(thrust, rate, u - eps, COEFFS)) / (2 * eps)).reshape(2, 1)
            assert np.allclose(a, fd_a, rtol=1e-6, atol=1e-6)
            assert np.allclose(b, fd_b, rtol=1e-6, atol=1e-6)
            # affine residual closes the exact rhs at the linearization point
            recon = a @ np.array([thrust, rate]) + (b * u).ravel() + affine.ravel()
            assert np.allclose(recon, jet_rhs(thrust, rate, u, COEFFS), atol=1e-9)


def staircase_profile(levels, hold_seconds, dt):
    hold = int(round(hold_seconds / dt))
    return np.repeat(np.asarray(levels, dtype=float), hold)


class TestIdentification:
    DT = 0.02

    def test_noiseless_recovery_within_one_percent(self):
        profile = staircase_profile([0.0, 30.0, 60.0, 90.0, 45.0, 15.0], 5.0, self.DT)
        data = generate_bench_data(COEFFS, profile, self.DT, noise_std=0.0, seed=0)
        result = identify_coefficients(data)
        got = result.coefficients
        for name in ("a1", "a2", "b1", "b2", "c"):
            rel = abs(getattr(got, name) - getattr(COEFFS, name)) / abs(getattr(COEFFS, name))
            assert rel < 0.01, f"{name}: {getattr(got, name)} vs {getattr(COEFFS, name)}"

    def test_round_trip_reproduces_trace_within_one_percent_rms(self):
        profile = staircase_profile([0.0, 30.0, 60.0, 90.0], 5.0, self.DT)
        data = generate_bench_data(COEFFS, profile, self.DT, noise_std=0.0, seed=1)
        result = identify_coefficients(data)
        scale = np.sqrt(np.mean(data[:, 2] ** 2))
        assert result.residual_rms / scale < 0.01

    def test_constant_u_raises_identifiability_error(self):
        profile = np.full(800, 40.0)
        data = generate_bench_data(COEFFS, profile, self.DT, noise_std=0.0, seed=2)
        with pytest.raises(IdentifiabilityError) as excinfo:
            identify_coefficients(data)
        message = str(excinfo.value)
        assert "b1" in message and "b2" in message

    def test_noisy_monte_carlo_residual_rms(self):
        profile = staircase_profile([0.0, 30.0, 60.0, 90.0, 45.0], 5.0, self.DT)
        for seed in range(20):
            data = generate_bench_data(COEFFS, profile, self.DT, noise_std=1.0, seed=seed)
            result = identify_coefficients(data)
            assert result.residual_rms <= 2.0, f"seed {seed}: rms {result.residual_rms}"

    def test_too_short_dataset_rejected(self):
        data = generate_bench_data(COEFFS, np.full(100, 10.0), self.DT, 0.0, 0)
        with pytest.raises(DomainError):
            identify_coefficients(data)


class TestBenchData:
    def test_constant_u_at_equilibrium_stays_constant(self):
        profile = np.full(600, 35.0)
        data = generate_bench_data(COEFFS, profile, 0.01, noise_std=0.0, seed=0)
        assert np.allclose(data[:, 2], COEFFS.equilibrium_thrust(35.0), atol=1e-6)

    def test_same_seed_identical(self):
        profile = staircase_profile([0.0, 50.0], 3.0, 0.01)
        a = generate_bench_data(COEFFS, profile, 0.01, noise_std=0.5, seed=11)
        b = generate_bench_data(COEFFS, profile, 0.01, noise_std=0.5, seed=11)
        assert np.array_equal(a, b)

    def test_csv_round_trip(self, tmp_path):
        profile = staircase_profile([10.0, 70.0], 2.0, 0.01)
        data = generate_bench_data(COEFFS, profile, 0.01, noise_std=0.3, seed=4)
        path = tmp_path / "bench.csv"
        write_bench_csv(data, path)
        raw = path.read_bytes()
        assert raw.startswith(b"t,u,thrust\n")
        assert b"\r" not in raw
        assert np.array_equal(read_bench_csv(path), data)


class TestThrottleCommand:
    def test_bounds_enforced(self):
        with pytest.raises(DomainError):
            ThrottleCommand([0.0, 0.0, 0.0, 120.0])
        with pytest.raises(DomainError):
            ThrottleCommand([-5.0, 0.0, 0.0, 0.0])

    def test_zero(self):
        assert np.array_equal(ThrottleCommand.zero().u, np.zeros(4))
