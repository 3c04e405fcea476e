"""Variable-sampling linearized MPC over centroidal + jet dynamics.

Each 10 Hz tick the coupled model (centroidal momentum with alpha-blended
gravity, Euler-rate kinematics, four second-order turbines, integrator
joints) is re-linearized at the current operating point, discretized at the
coarse step and transcribed into a condensed input-only QP: throttle is
zero-order-held per coarse step while joint-rate inputs integrate the joint
references the 1 kHz servo loop interpolates between ticks. The take-off
schedule ramps the gravity-blending alpha and owns the safety trapdoor.

State vector (24): com position (3), linear momentum (3), Euler ZYX (3),
angular momentum (3), per-turbine (thrust, thrust rate) (8), joints (4).
Input vector (8): throttle percents (4), joint rates (4).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ControllerFailure, DomainError, SingularityError
from .geometry import (
    Transform,
    euler_rate_matrix,
    euler_rate_matrix_partials,
    euler_zyx_to_matrix,
    skew,
)
from .jets import JetCoefficients, JetState, ThrottleCommand, U_MAX, T_MAX, jet_linearize
from .model import (
    CentroidalState,
    JointConfig,
    RobotModel,
    allocation_matrix,
    centroidal_rhs,
    linearize_allocation,
)
from .qp import QpProblem, QpSolver, QpStatus

N_X = 24
N_U = 8
N_JETS = 4

_COM = slice(0, 3)
_LINMOM = slice(3, 6)
_EULER = slice(6, 9)
_ANGMOM = slice(9, 12)
_JETS = slice(12, 20)
_QJ = slice(20, 24)


class FlightPhase(enum.Enum):
    IDLE = "Idle"
    SPOOL = "Spool"
    RAMP = "Ramp"
    AIRBORNE = "Airborne"
    SHUTDOWN = "Shutdown"


_ALLOWED_NEXT = {
    FlightPhase.IDLE: {FlightPhase.SPOOL, FlightPhase.SHUTDOWN},
    FlightPhase.SPOOL: {FlightPhase.RAMP, FlightPhase.SHUTDOWN},
    FlightPhase.RAMP: {FlightPhase.AIRBORNE, FlightPhase.SHUTDOWN},
    FlightPhase.AIRBORNE: {FlightPhase.SHUTDOWN},
    FlightPhase.SHUTDOWN: set(),
}


@dataclass(frozen=True)
class MpcState:
    centroidal: CentroidalState
    jets: tuple[JetState, ...]
    q: JointConfig

    def __post_init__(self):
        object.__setattr__(self, "jets", tuple(self.jets))
        if len(self.jets) != N_JETS:
            raise DomainError("MpcState needs 4 jet states")

    def as_vector(self) -> np.ndarray:
        x = np.empty(N_X)
        x[0:12] = self.centroidal.as_vector()
        for i, jet in enumerate(self.jets):
            x[12 + 2 * i] = jet.thrust
            x[13 + 2 * i] = jet.thrust_rate
        x[_QJ] = self.q.angles
        return x

    @staticmethod
    def from_vector(x: np.ndarray) -> "MpcState":
        x = np.asarray(x, dtype=float).reshape(N_X)
        jets = tuple(
            JetState(float(np.clip(x[12 + 2 * i], 0.0, T_MAX)), float(x[13 + 2 * i])) for i in range(N_JETS)
        )
        return MpcState(CentroidalState.from_vector(x[0:12]), jets, JointConfig(x[_QJ]))


@dataclass(frozen=True)
class MpcParams:
    horizon_steps: int = 15
    dt_coarse: float = 0.1
    w_com_pos: tuple[float, float, float] = (350.0, 350.0, 200.0)
    w_euler: tuple[float, float, float] = (40.0, 60.0, 60.0)  # yaw, pitch, roll
    w_lin_momentum: tuple[float, float, float] = (0.8, 0.8, 0.8)
    w_ang_momentum: tuple[float, float, float] = (25.0, 25.0, 12.0)
    w_throttle: float = 0.02
    w_joint_rate: float = 8.0
    w_joint_pos: float = 1.0  # washout pulling the posture back to neutral
    throttle_rate_limit: float = 15.0  # percent per coarse step
    joint_rate_limit: float = 0.5  # rad/s
    pitch_guard: float = 0.2  # rad
    shutdown_orientation_limit: float = 0.52  # rad, ~30 deg
    estimate_freshness: float = 0.05  # s

    def __post_init__(self):
        if self.horizon_steps < 2:
            raise DomainError("horizon must be at least 2 steps")
        weights = np.concatenate(
            [self.w_com_pos, self.w_euler, self.w_lin_momentum, self.w_ang_momentum,
             [self.w_throttle, self.w_joint_rate, self.w_joint_pos]]
        )
        if np.any(np.asarray(weights) < 0.0):
            raise DomainError("weights must be nonnegative")

    def state_weight_diagonal(self) -> np.ndarray:
        w = np.zeros(N_X)
        w[_COM] = self.w_com_pos
        w[_LINMOM] = self.w_lin_momentum
        w[_EULER] = self.w_euler
        w[_ANGMOM] = self.w_ang_momentum
        w[_QJ] = self.w_joint_pos
        return w


@dataclass(frozen=True)
class TakeoffSchedule:
    """Gravity-blend state machine. alpha in [0,1], never decreasing in Ramp."""

    alpha: float = 0.0
    ramp_rate: float = 0.04  # 1/s -> 25 s full ramp
    phase: FlightPhase = FlightPhase.IDLE
    desired_euler: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shutdown_orientation_limit: float = 0.52
    shutdown_reason: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha {self.alpha} outside [0, 1]")
        object.__setattr__(self, "desired_euler", np.asarray(self.desired_euler, dtype=float).reshape(3))

    def with_phase(self, phase: FlightPhase, reason: str | None = None) -> "TakeoffSchedule":
        if phase is self.phase:
            return self
        if phase is not FlightPhase.SHUTDOWN and phase not in _ALLOWED_NEXT[self.phase]:
            raise DomainError(f"illegal phase transition {self.phase.value} -> {phase.value}")
        return replace(self, phase=phase, shutdown_reason=reason if phase is FlightPhase.SHUTDOWN else None)


def wrap_angle(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def orientation_error(euler, desired) -> float:
    """Largest per-axis wrapped Euler error."""
    return float(np.max(np.abs(wrap_angle(np.asarray(euler) - np.asarray(desired)))))


def advance_schedule(
    schedule: TakeoffSchedule, x_estimated: MpcState, ground_contact: bool, dt: float
) -> TakeoffSchedule:
    """Ramp alpha, lift off at alpha = 1, trap orientation-error violations."""
    err = orientation_error(x_estimated.centroidal.euler_zyx, schedule.desired_euler)
    if schedule.phase is not FlightPhase.SHUTDOWN and err > schedule.shutdown_orientation_limit:
        return schedule.with_phase(FlightPhase.SHUTDOWN, reason=f"orientation error {np.degrees(err):.1f} deg over limit")
    if schedule.phase is FlightPhase.RAMP:
        alpha = min(schedule.alpha + schedule.ramp_rate * dt, 1.0)
        out = replace(schedule, alpha=alpha)
        if alpha >= 1.0 and not ground_contact:
            out = out.with_phase(FlightPhase.AIRBORNE)
        return out
    return schedule


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Piecewise-linear CoM setpoints plus a constant desired orientation."""

    times: np.ndarray
    positions: np.ndarray
    desired_euler: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        positions = np.asarray(self.positions, dtype=float).reshape(times.size, 3)
        if times.size < 1 or np.any(np.diff(times) <= 0.0):
            raise DomainError("reference timestamps must be strictly increasing")
        if not np.all(np.isfinite(positions)):
            raise DomainError("reference positions must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "desired_euler", np.asarray(self.desired_euler, dtype=float).reshape(3))

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(position, velocity) at time t; clamped and flat outside the table."""
        times, positions = self.times, self.positions
        if t <= times[0]:
            return positions[0].copy(), np.zeros(3)
        if t >= times[-1]:
            return positions[-1].copy(), np.zeros(3)
        idx = int(np.searchsorted(times, t, side="right")) - 1
        span = times[idx + 1] - times[idx]
        frac = (t - times[idx]) / span
        vel = (positions[idx + 1] - positions[idx]) / span
        return positions[idx] + frac * (positions[idx + 1] - positions[idx]), vel

    def offset_z(self, dz: float, from_time: float) -> "ReferenceTrajectory":
        """Step future setpoints by dz in z (SetReference support)."""
        pos_now, _ = self.sample(from_time)
        after = self.times > from_time
        times = np.concatenate([self.times[~after], [from_time], self.times[after]])
        positions = np.vstack([self.positions[~after], pos_now, self.positions[after] + [0.0, 0.0, dz]])
        order = np.argsort(times, kind="stable")
        times, positions = times[order], positions[order]
        keep = np.concatenate([[True], np.diff(times) > 1e-9])
        return ReferenceTrajectory(times[keep], positions[keep], self.desired_euler)

    @staticmethod
    def hold(position, desired_euler=(0.0, 0.0, 0.0)) -> "ReferenceTrajectory":
        return ReferenceTrajectory([0.0], [np.asarray(position, float)], desired_euler)


def nonlinear_rhs(
    x: np.ndarray,
    u: np.ndarray,
    model: RobotModel,
    coeffs: JetCoefficients,
    alpha: float,
    scale_gravity: bool = True,
) -> np.ndarray:
    """Continuous-time prediction dynamics (unclamped, for linearization)."""
    x = np.asarray(x, dtype=float).reshape(N_X)
    u = np.asarray(u, dtype=float).reshape(N_U)
    euler = x[_EULER]
    rot = euler_zyx_to_matrix(euler)
    com = x[_COM]
    base_pose = Transform(rot=rot, pos=com - rot @ model.com_offset)
    thrusts = np.clip(x[12:20:2], 0.0, None)
    alloc = allocation_matrix(model, JointConfig(x[_QJ]), base_pose, com)
    wrench = alloc.a @ thrusts
    grav = alpha * model.weight if scale_gravity else model.weight

    inertia_w = rot @ model.inertia_body @ rot.T
    omega_world = np.linalg.solve(inertia_w, x[_ANGMOM])
    euler_rate = np.linalg.solve(euler_rate_matrix(euler), omega_world)

    out = np.empty(N_X)
    out[_COM] = x[_LINMOM] / model.mass
    out[_LINMOM] = wrench[:3]
    out[5] -= grav
    out[_EULER] = euler_rate
    out[_ANGMOM] = wrench[3:]
    for i in range(N_JETS):
        thrust, rate = x[12 + 2 * i], x[13 + 2 * i]
        out[12 + 2 * i] = rate
        out[13 + 2 * i] = coeffs.a1 * thrust + coeffs.a2 * rate + coeffs.b1 * u[i] + coeffs.b2 * u[i] ** 2 + coeffs.c
    out[_QJ] = u[4:8]
    return out


def _rotation_generators(euler: np.ndarray) -> np.ndarray:
    """World axes generating d(R v)/d euler_k = w_k x (R v); identical to W columns."""
    return euler_rate_matrix(euler).T  # rows w_yaw, w_pitch, w_roll


def linearize_prediction_model(
    x: MpcState,
    u0: ThrottleCommand,
    alpha: float,
    model: RobotModel,
    coeffs: JetCoefficients,
    dt_coarse: float = 0.1,
    pitch_guard: float = 0.2,
    scale_gravity: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward-Euler discrete (A_d, B_d, c_d) about the current operating point.

    Delta coordinates: x_{k+1} - x0 = A_d (x_k - x0) + B_d (u_k - u0) + c_d,
    so c_d = dt * f(x0, u0) vanishes exactly at a trim point. One triple is
    valid for every horizon step (re-linearized each controller tick).
    """
    pitch = x.centroidal.euler_zyx[1]
    if abs(pitch) > np.pi / 2 - pitch_guard:
        raise SingularityError(
            f"pitch {pitch:.3f} rad within the guard band of the Euler singularity"
        )
    xv = x.as_vector()
    uv = np.concatenate([u0.u, np.zeros(4)])

    euler = xv[_EULER]
    rot = euler_zyx_to_matrix(euler)
    com = xv[_COM]
    base_pose = Transform(rot=rot, pos=com - rot @ model.com_offset)
    q = JointConfig(xv[_QJ])
    thrusts = np.clip(xv[12:20:2], 0.0, None)
    alloc = allocation_matrix(model, q, base_pose, com)
    wrench = alloc.a @ thrusts

    a_c = np.zeros((N_X, N_X))
    b_c = np.zeros((N_X, N_U))

    # com kinematics
    a_c[_COM, _LINMOM] = np.eye(3) / model.mass

    # wrench sensitivities: thrust states and joints via the allocation Jacobian
    for i in range(N_JETS):
        a_c[3:6, 12 + 2 * i] = alloc.a[:3, i]
        a_c[9:12, 12 + 2 * i] = alloc.a[3:, i]
    alloc_jac = linearize_allocation(model, q, base_pose, com, thrusts)
    a_c[3:6, _QJ] = alloc_jac[:3]
    a_c[9:12, _QJ] = alloc_jac[3:]
    # orientation dependence: the jet wrench is a rotated base-frame vector
    generators = _rotation_generators(euler)
    for k in range(3):
        a_c[3:6, 6 + k] = np.cross(generators[k], wrench[:3])
        a_c[9:12, 6 + k] = np.cross(generators[k], wrench[3:])

    # Euler-rate kinematics
    inertia_w = rot @ model.inertia_body @ rot.T
    inertia_w_inv = np.linalg.inv(inertia_w)
    h = xv[_ANGMOM]
    omega = inertia_w_inv @ h
    w_mat = euler_rate_matrix(euler)
    w_inv = np.linalg.inv(w_mat)
    a_c[_EULER, _ANGMOM] = w_inv @ inertia_w_inv
    dw_yaw, dw_pitch = euler_rate_matrix_partials(euler)
    dw = (dw_yaw, dw_pitch, np.zeros((3, 3)))
    for k in range(3):
        domega = np.cross(generators[k], omega) - inertia_w_inv @ np.cross(generators[k], h)
        a_c[_EULER, 6 + k] = -w_inv @ dw[k] @ w_inv @ omega + w_inv @ domega

    # turbine blocks and throttle inputs
    for i in range(N_JETS):
        jet_a, jet_b, _ = jet_linearize(x.jets[i], float(u0.u[i]), coeffs)
        rows = slice(12 + 2 * i, 14 + 2 * i)
        a_c[rows, rows] = jet_a
        b_c[rows, i] = jet_b.ravel()

    # joint integrators
    b_c[_QJ, 4:8] = np.eye(4)

    a_d = np.eye(N_X) + dt_coarse * a_c
    b_d = dt_coarse * b_c
    c_d = dt_coarse * nonlinear_rhs(xv, uv, model, coeffs, alpha, scale_gravity)
    return a_d, b_d, c_d


def trim_thrusts(x: MpcState, alpha: float, model: RobotModel) -> np.ndarray:
    """Least-squares thrusts cancelling the alpha-scaled weight (exact when reachable)."""
    xv = x.as_vector()
    euler = xv[_EULER]
    rot = euler_zyx_to_matrix(euler)
    com = xv[_COM]
    base_pose = Transform(rot=rot, pos=com - rot @ model.com_offset)
    alloc = allocation_matrix(model, x.q, base_pose, com)
    target = np.zeros(6)
    target[2] = alpha * model.weight
    thrusts, *_ = np.linalg.lstsq(alloc.a, target, rcond=None)
    return np.clip(thrusts, 0.0, T_MAX)


def trim_throttle(x: MpcState, alpha: float, model: RobotModel, coeffs: JetCoefficients) -> np.ndarray:
    """Throttles whose equilibrium thrusts best cancel the alpha-scaled weight."""
    return np.array([coeffs.equilibrium_throttle(t) for t in trim_thrusts(x, alpha, model)])


def build_qp(
    x: MpcState,
    schedule: TakeoffSchedule,
    reference: ReferenceTrajectory,
    params: MpcParams,
    model: RobotModel,
    coeffs: JetCoefficients,
    t_now: float,
    u_prev: ThrottleCommand,
    scale_gravity: bool = True,
) -> QpProblem:
    """Condensed input-only QP over [throttle(4); joint rate(4)] x horizon.

    Throttle is zero-order-held within each coarse step; joint-rate inputs
    integrate continuously into the joint reference (variable-sampling
    contract). Decision variables are deltas about (current throttle, zero
    joint rates).
    """
    horizon = params.horizon_steps
    dt = params.dt_coarse
    a_d, b_d, c_d = linearize_prediction_model(
        x, u_prev, schedule.alpha, model, coeffs, dt, params.pitch_guard, scale_gravity
    )
    xv = x.as_vector()
    u_trim = trim_throttle(x, schedule.alpha, model, coeffs)

    # prediction matrices: dX = su dU + dvec (stacked over k = 1..H)
    su = np.zeros((horizon * N_X, horizon * N_U))
    dvec = np.zeros(horizon * N_X)
    powers = [np.eye(N_X)]
    for _ in range(horizon - 1):
        powers.append(a_d @ powers[-1])
    drift = np.zeros(N_X)
    for k in range(horizon):
        drift = a_d @ drift + c_d if k else c_d.copy()
        dvec[k * N_X : (k + 1) * N_X] = drift
        for j in range(k + 1):
            su[k * N_X : (k + 1) * N_X, j * N_U : (j + 1) * N_U] = powers[k - j] @ b_d

    # stacked tracking error constants g_k = x0 + d_k - ref_k
    w_state = params.state_weight_diagonal()
    gvec = np.empty(horizon * N_X)
    euler_ref = xv[_EULER] + wrap_angle(schedule.desired_euler - xv[_EULER])
    for k in range(horizon):
        pos_ref, vel_ref = reference.sample(t_now + (k + 1) * dt)
        ref = np.zeros(N_X)
        ref[_COM] = pos_ref
        ref[_LINMOM] = model.mass * vel_ref
        ref[_EULER] = euler_ref
        ref[_ANGMOM] = 0.0
        block = slice(k * N_X, (k + 1) * N_X)
        gvec[block] = xv + dvec[block] - ref

    w_full = np.tile(w_state, horizon)
    h_mat = 2.0 * (su.T * w_full) @ su
    f_vec = 2.0 * su.T @ (w_full * gvec)

    # input effort: throttle about trim, joint rates about zero
    w_input = np.tile(np.concatenate([np.full(4, params.w_throttle), np.full(4, params.w_joint_rate)]), horizon)
    h_mat[np.diag_indices_from(h_mat)] += 2.0 * w_input
    du_trim = np.tile(np.concatenate([u_prev.u - u_trim, np.zeros(4)]), horizon)
    f_vec += 2.0 * w_input * du_trim
    h_mat = 0.5 * (h_mat + h_mat.T)

    # box bounds on absolute inputs
    lb = np.tile(np.concatenate([-u_prev.u, np.full(4, -params.joint_rate_limit)]), horizon)
    ub = np.tile(np.concatenate([U_MAX - u_prev.u, np.full(4, params.joint_rate_limit)]), horizon)

    rows_in, rhs_in = [], []
    n_var = horizon * N_U

    def throttle_rate_rows():
        for k in range(horizon):
            for i in range(4):
                row = np.zeros(n_var)
                row[k * N_U + i] = 1.0
                base = 0.0
                if k > 0:
                    row[(k - 1) * N_U + i] = -1.0
                # |u_k - u_{k-1}| <= du_max; k = 0 compares against the applied command
                rows_in.append(row.copy())
                rhs_in.append(params.throttle_rate_limit - base)
                rows_in.append(-row)
                rhs_in.append(params.throttle_rate_limit + base)

    throttle_rate_rows()

    # joint limits on predicted positions q_k = q0 + dt * cumulative rates
    for k in range(horizon):
        for i in range(4):
            row = np.zeros(n_var)
            for j in range(k + 1):
                row[j * N_U + 4 + i] = dt
            rows_in.append(row.copy())
            rhs_in.append(model.joint_limits_hi[i] - xv[20 + i])
            rows_in.append(-row)
            rhs_in.append(xv[20 + i] - model.joint_limits_lo[i])

    # predicted thrust nonnegativity through the prediction matrices
    for k in range(horizon):
        for i in range(N_JETS):
            idx = k * N_X + 12 + 2 * i
            const = xv[12 + 2 * i] + dvec[idx]
            rows_in.append(-su[idx])
            rhs_in.append(const)

    return QpProblem(
        h=h_mat,
        f=f_vec,
        a_in=np.array(rows_in),
        b_in=np.array(rhs_in),
        lb=lb,
        ub=ub,
    )


def interpolate_joint_reference(prev: np.ndarray, next_ref: np.ndarray, t: float, period: float = 0.1) -> np.ndarray:
    """Linear interpolation between consecutive coarse-step joint targets."""
    if not 0.0 <= t <= period + 1e-12:
        raise DomainError(f"interpolation time {t} outside [0, {period}]")
    frac = t / period
    prev = np.asarray(prev, dtype=float)
    return prev + frac * (np.asarray(next_ref, dtype=float) - prev)


@dataclass
class MpcDiagnostics:
    solve_time: float = 0.0
    qp_iterations: int = 0
    qp_status: str = "skipped"
    cost: float = 0.0
    error: str | None = None
    held: bool = False


class MpcController:
    """10 Hz controller task: owns the QP solver workspace and failure latching.

    Reads immutable estimate snapshots; a QP failure holds the previous
    command once and trips Shutdown on the second consecutive failure.
    """

    def __init__(self, model: RobotModel, coeffs: JetCoefficients, params: MpcParams | None = None):
        self.model = model
        self.coeffs = coeffs
        self.params = params if params is not None else MpcParams()
        self.solver = QpSolver()
        self.prev_throttle = ThrottleCommand.zero()
        self.prev_joint_ref = np.zeros(4)
        self.consecutive_failures = 0

    def reset(self, joint_ref: np.ndarray | None = None) -> None:
        self.solver.reset()
        self.prev_throttle = ThrottleCommand.zero()
        self.prev_joint_ref = np.zeros(4) if joint_ref is None else np.asarray(joint_ref, float).copy()
        self.consecutive_failures = 0

    def mpc_step(
        self,
        x_estimated: MpcState,
        schedule: TakeoffSchedule,
        reference: ReferenceTrajectory,
        t_now: float,
        estimate_age: float = 0.0,
    ) -> tuple[ThrottleCommand, np.ndarray, MpcDiagnostics]:
        """One controller tick; deterministic given identical inputs."""
        params = self.params
        diag = MpcDiagnostics()

        if schedule.phase in (FlightPhase.IDLE, FlightPhase.SPOOL, FlightPhase.SHUTDOWN):
            # no QP during ground idling; Shutdown ramp-down is the runtime's job
            throttle = ThrottleCommand.zero()
            self.prev_throttle = throttle
            self.prev_joint_ref = x_estimated.q.angles.copy()
            diag.qp_status = "phase_gated"
            return throttle, self.prev_joint_ref.copy(), diag

        pitch = x_estimated.centroidal.euler_zyx[1]
        if abs(pitch) > np.pi / 2 - params.pitch_guard:
            raise SingularityError(f"pitch estimate {pitch:.3f} rad violates the guard band")

        if estimate_age > params.estimate_freshness:
            diag.error = f"stale estimate ({estimate_age * 1e3:.0f} ms old)"
            diag.held = True
            self._register_failure()
            return self.prev_throttle, self.prev_joint_ref.copy(), diag

        started = time.perf_counter()
        try:
            problem = build_qp(
                x_estimated, schedule, reference, params, self.model, self.coeffs, t_now, self.prev_throttle
            )
            solution = self.solver.solve(problem, tol=1e-5, max_iter=2500)
        except (np.linalg.LinAlgError, DomainError) as exc:
            diag.error = f"qp build failed: {exc}"
            diag.held = True
            self._register_failure()
            return self.prev_throttle, self.prev_joint_ref.copy(), diag
        diag.solve_time = time.perf_counter() - started
        diag.qp_iterations = solution.iterations
        diag.qp_status = solution.status.value
        diag.cost = solution.objective

        usable = solution.status is QpStatus.OPTIMAL or (
            solution.status is QpStatus.MAX_ITER
            and solution.primal_residual < 1e-3
            and solution.dual_residual < 1e-3
        )
        if not usable:
            diag.error = f"qp {solution.status.value}"
            diag.held = True
            self._register_failure()
            return self.prev_throttle, self.prev_joint_ref.copy(), diag

        self.consecutive_failures = 0
        delta = solution.x[:N_U]
        throttle_vals = np.clip(self.prev_throttle.u + delta[:4], 0.0, U_MAX)
        step_limit = params.throttle_rate_limit
        throttle_vals = np.clip(
            throttle_vals, self.prev_throttle.u - step_limit, self.prev_throttle.u + step_limit
        )
        throttle = ThrottleCommand(throttle_vals)
        joint_ref = np.clip(
            x_estimated.q.angles + delta[4:8] * params.dt_coarse,
            self.model.joint_limits_lo,
            self.model.joint_limits_hi,
        )
        self.prev_throttle = throttle
        self.prev_joint_ref = joint_ref.copy()
        return throttle, joint_ref, diag

    def _register_failure(self) -> None:
        self.consecutive_failures += 1
        if self.consecutive_failures >= 2:
            raise ControllerFailure("two consecutive controller failures; shutting down")
