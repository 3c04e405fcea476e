"""Second-order nonlinear turbine model, linearization, stepping, identification.

Committed model structure:

    T_ddot = a1*T + a2*T_dot + b1*u + b2*u**2 + c

with throttle u in percent [0, 100] and thrust T clamped to [0, T_MAX] N.
The quadratic-input second-order form is the simplest shape that captures a
rate-limited, nonlinear throttle response.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IdentifiabilityError, NumericError

T_MAX = 250.0  # peak thrust per turbine, N
U_MAX = 100.0
N_JETS = 4


@dataclass(frozen=True)
class JetState:
    thrust: float  # N
    thrust_rate: float  # N/s

    def __post_init__(self):
        if not (np.isfinite(self.thrust) and np.isfinite(self.thrust_rate)):
            raise NumericError(f"non-finite jet state ({self.thrust}, {self.thrust_rate})")
        if not -1e-9 <= self.thrust <= T_MAX + 1e-9:
            raise DomainError(f"thrust {self.thrust} outside [0, {T_MAX}] N")


@dataclass(frozen=True)
class JetCoefficients:
    a1: float  # 1/s^2
    a2: float  # 1/s
    b1: float  # N/s^2 per percent
    b2: float  # N/s^2 per percent^2
    c: float  # N/s^2
    idle_thrust: float = 0.0  # N

    def __post_init__(self):
        # roots of s^2 - a2*s - a1 must have negative real parts
        roots = np.roots([1.0, -self.a2, -self.a1])
        if np.any(roots.real >= 0.0):
            raise DomainError(f"unstable jet model: characteristic roots {roots}")

    def equilibrium_thrust(self, u: float) -> float:
        """Steady-state thrust at constant throttle: root of a1*T + b1*u + b2*u^2 + c = 0."""
        return float(np.clip(-(self.b1 * u + self.b2 * u * u + self.c) / self.a1, 0.0, T_MAX))

    def equilibrium_throttle(self, thrust: float) -> float:
        """Inverse equilibrium map, clamped to [0, 100]."""
        thrust = float(np.clip(thrust, 0.0, T_MAX))
        rhs = -(self.c + self.a1 * thrust)
        if self.b2 == 0.0:
            u = rhs / self.b1
        else:
            disc = self.b1 * self.b1 + 4.0 * self.b2 * rhs
            if disc < 0.0:
                return 0.0 if rhs < 0.0 else U_MAX
            u = (-self.b1 + np.sqrt(disc)) / (2.0 * self.b2)
        return float(np.clip(u, 0.0, U_MAX))


def reference_coefficients() -> JetCoefficients:
    """Reference tuning: idle 8 N, T_eq(100) = 220 N, 0->200 N rise time ~2.5 s."""
    return JetCoefficients(a1=-1.96, a2=-2.8, b1=0.7056, b2=0.034496, c=15.68, idle_thrust=8.0)


@dataclass(frozen=True)
class ThrottleCommand:
    """Per-turbine throttle percents; rate limiting is enforced by the MPC."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(N_JETS)
        if np.any(u < -1e-9) or np.any(u > U_MAX + 1e-9):
            raise DomainError(f"throttle out of [0, {U_MAX}]: {u}")
        object.__setattr__(self, "u", np.clip(u, 0.0, U_MAX))

    @staticmethod
    def zero() -> "ThrottleCommand":
        return ThrottleCommand(np.zeros(N_JETS))


def _accel(thrust, rate, u, k: JetCoefficients):
    return k.a1 * thrust + k.a2 * rate + k.b1 * u + k.b2 * u * u + k.c


def jet_step(state: JetState, u: float, coeffs: JetCoefficients, dt: float) -> JetState:
    """Semi-implicit Euler step; thrust clamped to [0, T_MAX] with rate zeroed at the clamp."""
    if not 0.0 < dt <= 0.1:
        raise DomainError(f"dt must lie in (0, 0.1], got {dt}")
    if not 0.0 <= u <= U_MAX:
        raise DomainError(f"throttle must lie in [0, {U_MAX}], got {u}")
    rate = state.thrust_rate + dt * _accel(state.thrust, state.thrust_rate, u, coeffs)
    thrust = state.thrust + dt * rate
    if not (np.isfinite(thrust) and np.isfinite(rate)):
        raise NumericError("jet_step produced a non-finite state")
    if thrust <= 0.0:
        thrust, rate = 0.0, max(rate, 0.0)
    elif thrust >= T_MAX:
        thrust, rate = T_MAX, min(rate, 0.0)
    return JetState(thrust=thrust, thrust_rate=rate)


def jet_rhs(thrust: float, rate: float, u: float, coeffs: JetCoefficients) -> np.ndarray:
    """Continuous-time right-hand side (T_dot, T_ddot), unclamped."""
    return np.array([rate, _accel(thrust, rate, u, coeffs)])


def jet_linearize(
    state: JetState, u: float, coeffs: JetCoefficients
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact Jacobians of the ODE at (state, u): (2x2 A, 2x1 B, 2x1 affine residual).

    The residual is f(x0, u0) - A x0 - B u0, so f(x, u) ~ A x + B u + residual.
    """
    if not 0.0 <= u <= U_MAX:
        raise DomainError(f"throttle must lie in [0, {U_MAX}], got {u}")
    a = np.array([[0.0, 1.0], [coeffs.a1, coeffs.a2]])
    b = np.array([[0.0], [coeffs.b1 + 2.0 * coeffs.b2 * u]])
    affine = np.array([[0.0], [coeffs.c - coeffs.b2 * u * u]])
    return a, b, affine


# --- bench-style identification ---


def generate_bench_data(
    coeffs: JetCoefficients,
    throttle_profile: np.ndarray,
    dt: float,
    noise_std: float,
    seed: int,
    initial: JetState | None = None,
) -> np.ndarray:
    """Synthetic test-bench dataset: columns (t, u, thrust), deterministic per seed."""
    profile = np.asarray(throttle_profile, dtype=float)
    if np.any(profile < 0.0) or np.any(profile > U_MAX):
        raise DomainError("throttle profile must stay within [0, 100]")
    state = initial if initial is not None else JetState(coeffs.equilibrium_thrust(profile[0]), 0.0)
    rng = np.random.default_rng(seed)
    rows = np.empty((profile.size, 3))
    for k, u in enumerate(profile):
        rows[k] = (k * dt, u, state.thrust)
        state = jet_step(state, float(u), coeffs, dt)
    if noise_std > 0.0:
        rows[:, 2] += rng.normal(0.0, noise_std, size=profile.size)
    return rows


def write_bench_csv(dataset: np.ndarray, path) -> None:
    """CSV with header t,u,thrust; SI units, UTF-8, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,u,thrust\n")
        for t, u, thrust in dataset:
            fh.write(f"{float(t)!r},{float(u)!r},{float(thrust)!r}\n")


def read_bench_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,u,thrust":
            raise DomainError(f"unexpected bench CSV header: {header}")
        return np.loadtxt(io.StringIO(fh.read()), delimiter=",").reshape(-1, 3)


_REGRESSOR_NAMES = ("a1 (thrust)", "a2 (thrust rate)", "b1 (u)", "b2 (u^2)", "c (offset)")
_SMOOTH_KERNEL = np.full(5, 0.2)


def _smooth5(x: np.ndarray) -> np.ndarray:
    padded = np.concatenate([x[:2][::-1], x, x[-2:][::-1]])
    return np.convolve(padded, _SMOOTH_KERNEL, mode="valid")


@dataclass(frozen=True)
class IdentificationResult:
    coefficients: JetCoefficients
    residual_rms: float  # thrust reconstruction RMS over the dataset, N


def _fit(regressors: np.ndarray, target: np.ndarray) -> np.ndarray:
    scale = np.linalg.norm(regressors, axis=0)
    scale[scale == 0.0] = 1.0
    scaled = regressors / scale
    _, sv, vt = np.linalg.svd(scaled, full_matrices=False)
    if sv[-1] < 1e-8 * sv[0]:
        weak = [_REGRESSOR_NAMES[i] for i in np.nonzero(np.abs(vt[-1]) > 0.3)[0]]
        raise IdentifiabilityError(
            "regressor matrix is rank deficient; cannot separate: " + ", ".join(weak),
            deficient_directions=weak,
        )
    theta, *_ = np.linalg.lstsq(scaled, target, rcond=None)
    return theta / scale


def _reconstruct(coeffs: JetCoefficients, dataset: np.ndarray, dt: float) -> np.ndarray:
    state = JetState(float(np.clip(dataset[0, 2], 0.0, T_MAX)), 0.0)
    out = np.empty(dataset.shape[0])
    for k, (_, u, _) in enumerate(dataset):
        out[k] = state.thrust
        state = jet_step(state, float(np.clip(u, 0.0, U_MAX)), coeffs, dt)
    return out


def _simulate_theta(theta: np.ndarray, thrust0: float, u: np.ndarray, dt: float) -> np.ndarray:
    """Semi-implicit rollout for raw parameter vectors (no stability gate)."""
    a1, a2, b1, b2, c = theta
    thrust = float(np.clip(thrust0, 0.0, T_MAX))
    rate = 0.0
    out = np.empty(u.size)
    for k in range(u.size):
        out[k] = thrust
        rate += dt * (a1 * thrust + a2 * rate + b1 * u[k] + b2 * u[k] * u[k] + c)
        thrust += dt * rate
        if thrust <= 0.0:
            thrust, rate = 0.0, max(rate, 0.0)
        elif thrust >= T_MAX:
            thrust, rate = T_MAX, min(rate, 0.0)
        if not np.isfinite(thrust):
            out[k:] = 1e12
            return out
    return out


def identify_coefficients(dataset: np.ndarray, refine_iters: int = 12) -> IdentificationResult:
    """Fit (a1, a2, b1, b2, c) from a (t, u, thrust) dataset.

    An initial estimate comes from least squares on derivatives (central
    differences of a 5-point-smoothed thrust trace, samples adjacent to
    throttle steps dropped). Raw derivative regression is badly conditioned
    under measurement noise and biased by the generator's own time
    discretization, so the estimate is refined by damped Gauss-Newton on the
    simulation error (rollout vs measured thrust).
    """
    dataset = np.asarray(dataset, dtype=float).reshape(-1, 3)
    if dataset.shape[0] < 500:
        raise DomainError(f"need at least 500 samples, got {dataset.shape[0]}")
    t, u, thrust = dataset.T
    steps = np.diff(t)
    dt = float(np.median(steps))
    if not np.allclose(steps, dt, rtol=0.0, atol=1e-9):
        raise DomainError("dataset must be uniformly sampled")
    if np.unique(np.round(u, 6)).size < 3:
        raise IdentifiabilityError(
            "throttle profile must cover at least 3 distinct levels; b1 (u), b2 (u^2) "
            "and c (offset) are not separable from constant input",
            deficient_directions=["b1 (u)", "b2 (u^2)", "c (offset)"],
        )

    smoothed = _smooth5(thrust)
    t_dot = np.gradient(smoothed, dt)
    t_ddot = np.gradient(t_dot, dt)

    keep = np.ones(dataset.shape[0], dtype=bool)
    keep[:3] = keep[-3:] = False
    step_idx = np.nonzero(np.abs(np.diff(u)) > 1e-9)[0]
    for idx in step_idx:
        keep[max(idx - 3, 0) : idx + 4] = False
    # clamp saturation corrupts the unclamped regression
    keep &= (thrust > 0.5) & (thrust < T_MAX - 0.5)

    regressors = np.column_stack([smoothed, t_dot, u, u * u, np.ones_like(u)])[keep]
    theta = _fit(regressors, t_ddot[keep])
    # stability clamp: only the refinement start point, not the reported fit
    theta[0] = min(theta[0], -1e-3)
    theta[1] = min(theta[1], -1e-3)

    theta = _refine_output_error(theta, thrust, u, dt, refine_iters)
    coeffs = JetCoefficients(*theta)
    residual = _reconstruct(coeffs, dataset, dt) - thrust
    return IdentificationResult(coefficients=coeffs, residual_rms=float(np.sqrt(np.mean(residual**2))))


def _refine_output_error(theta, thrust, u, dt, iters):
    """Damped Gauss-Newton on the thrust reconstruction error."""
    thrust0 = thrust[0]
    scale = np.abs(theta) + 1e-3
    lam = 1e-3

    def cost(th):
        r = _simulate_theta(th, thrust0, u, dt) - thrust
        return r, float(r @ r)

    residual, best = cost(theta)
    for _ in range(iters):
        jac = np.empty((thrust.size, 5))
        for j in range(5):
            step = 1e-5 * scale[j]
            up = theta.copy()
            up[j] += step
            jac[:, j] = (_simulate_theta(up, thrust0, u, dt) - (residual + thrust)) / step
        jtj = jac.T @ jac
        jtr = jac.T @ residual
        improved = False
        for _ in range(8):
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-12), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + delta
            trial_residual, trial_cost = cost(trial)
            if trial_cost < best:
                rel_gain = (best - trial_cost) / max(best, 1e-12)
                theta, residual, best = trial, trial_residual, trial_cost
                lam = max(lam * 0.3, 1e-9)
                improved = True
                if rel_gain < 1e-10:
                    return theta
                break
            lam *= 10.0
        if not improved:
            break
    return theta
