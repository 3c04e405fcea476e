"""Dense convex QP solver for the MPC: operator splitting with active-set polish.

Solves

    minimize    0.5 x'Hx + f'x
    subject to  A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub

via an OSQP-style ADMM on the stacked constraint l <= Ax <= u, with Ruiz
equilibration, per-row rho (equalities weighted heavily), periodic rho
adaptation, and a final equality-constrained polish on the detected active
set. Divergence of the iterates is treated as an infeasibility certificate.
Deterministic for fixed inputs; a solver instance owns its workspace, so use
one instance per thread.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DomainError

_INF = np.inf


class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class QpProblem:
    h: np.ndarray
    f: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        n = h.shape[0]
        h = h.reshape(n, n)
        if not np.allclose(h, h.T, atol=1e-10):
            raise DomainError("H must be symmetric to 1e-10")
        f = np.asarray(self.f, dtype=float).reshape(n)
        a_eq = None if self.a_eq is None else np.asarray(self.a_eq, dtype=float).reshape(-1, n)
        b_eq = None if self.b_eq is None else np.asarray(self.b_eq, dtype=float).reshape(-1)
        if (a_eq is None) != (b_eq is None):
            raise DomainError("a_eq and b_eq must be given together")
        if a_eq is not None:
            if a_eq.shape[0] != b_eq.shape[0]:
                raise DomainError("a_eq/b_eq row mismatch")
            if a_eq.shape[0] > n:
                raise DomainError("more equality constraints than variables")
        a_in = None if self.a_in is None else np.asarray(self.a_in, dtype=float).reshape(-1, n)
        b_in = None if self.b_in is None else np.asarray(self.b_in, dtype=float).reshape(-1)
        if (a_in is None) != (b_in is None):
            raise DomainError("a_in and b_in must be given together")
        if a_in is not None and a_in.shape[0] != b_in.shape[0]:
            raise DomainError("a_in/b_in row mismatch")
        lb = np.full(n, -_INF) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        ub = np.full(n, _INF) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)
        if np.any(lb > ub):
            raise DomainError("lb must not exceed ub")
        for name, value in (("h", h), ("f", f), ("a_eq", a_eq), ("b_eq", b_eq), ("a_in", a_in), ("b_in", b_in), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.f.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.h @ x + self.f @ x)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(A, l, u, is_eq) for the two-sided form l <= Ax <= u."""
        n = self.n
        blocks, lo, hi, eq = [], [], [], []
        if self.a_eq is not None and self.a_eq.shape[0]:
            blocks.append(self.a_eq)
            lo.append(self.b_eq)
            hi.append(self.b_eq)
            eq.append(np.ones(self.a_eq.shape[0], dtype=bool))
        if self.a_in is not None and self.a_in.shape[0]:
            blocks.append(self.a_in)
            lo.append(np.full(self.a_in.shape[0], -_INF))
            hi.append(self.b_in)
            eq.append(np.zeros(self.a_in.shape[0], dtype=bool))
        finite = np.isfinite(self.lb) | np.isfinite(self.ub)
        if np.any(finite):
            eye = np.eye(n)[finite]
            blocks.append(eye)
            lo.append(self.lb[finite])
            hi.append(self.ub[finite])
            eq.append(self.lb[finite] == self.ub[finite])
        if not blocks:
            return np.zeros((0, n)), np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool)
        return np.vstack(blocks), np.concatenate(lo), np.concatenate(hi), np.concatenate(eq)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    y: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    z: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


def kkt_residuals(p: QpProblem, x: np.ndarray, a: np.ndarray, lo: np.ndarray, hi: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(stationarity, primal feasibility, complementary slackness), inf-norms."""
    ax = a @ x if a.size else np.zeros(0)
    stat = float(np.max(np.abs(p.h @ x + p.f + (a.T @ y if a.size else 0.0))) if p.n else 0.0)
    if ax.size:
        prim = float(np.max(np.maximum(np.maximum(lo - ax, 0.0), np.maximum(ax - hi, 0.0))))
        comp_terms = np.where(y > 0.0, y * np.abs(np.where(np.isfinite(hi), hi - ax, 0.0)), -y * np.abs(np.where(np.isfinite(lo), ax - lo, 0.0)))
        comp = float(np.max(np.abs(comp_terms)))
    else:
        prim = comp = 0.0
    return stat, prim, comp


def _ruiz_equilibrate(h, f, a, iterations=10):
    """Symmetric Ruiz scaling of [[H, A'], [A, 0]]; returns (D, E, c, Hs, fs, As)."""
    n, m = h.shape[0], a.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    cost_scale = 1.0
    hs, fs, as_ = h.copy(), f.copy(), a.copy()
    for _ in range(iterations):
        col_h = np.max(np.abs(hs), axis=0) if n else np.zeros(0)
        col_a = np.max(np.abs(as_), axis=0) if m else np.zeros(n)
        norm_x = np.sqrt(np.maximum(col_h, col_a))
        norm_x[norm_x == 0.0] = 1.0
        delta_d = 1.0 / norm_x
        row_a = np.max(np.abs(as_), axis=1) if m else np.zeros(0)
        row_a[row_a == 0.0] = 1.0
        delta_e = 1.0 / np.sqrt(row_a)
        hs = hs * delta_d[:, None] * delta_d[None, :]
        fs = fs * delta_d
        if m:
            as_ = as_ * delta_e[:, None] * delta_d[None, :]
        d *= delta_d
        e *= delta_e
        # cost scaling keeps the quadratic and linear parts balanced
        mean_col = np.mean(np.max(np.abs(hs), axis=0)) if n else 1.0
        fnorm = np.max(np.abs(fs)) if n else 1.0
        gamma = 1.0 / max(mean_col, fnorm, 1e-8)
        hs *= gamma
        fs *= gamma
        cost_scale *= gamma
    return d, e, cost_scale, hs, fs, as_


class QpSolver:
    """Reusable solver with warm starting across calls (one instance per thread)."""

    def __init__(self, sigma: float = 1e-6, alpha_relax: float = 1.6, rho_eq_weight: float = 1e3):
        self.sigma = sigma
        self.alpha_relax = alpha_relax
        self.rho_eq_weight = rho_eq_weight
        self._warm: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        self._rho_hint: np.ndarray | None = None

    def reset(self) -> None:
        self._warm = None
        self._rho_hint = None

    def solve(
        self,
        p: QpProblem,
        warm_start: np.ndarray | None = None,
        tol: float = 1e-6,
        max_iter: int = 4000,
    ) -> QpSolution:
        n = p.n
        a_full, lo_full, hi_full, is_eq = p.stacked()
        m = a_full.shape[0]

        if m == 0:
            x = np.linalg.solve(p.h + self.sigma * np.eye(n), -p.f)
            return QpSolution(x, QpStatus.OPTIMAL, 0, 0.0, float(np.max(np.abs(p.h @ x + p.f), initial=0.0)), p.objective(x))

        d, e, cost_scale, hs, fs, as_ = _ruiz_equilibrate(p.h, p.f, a_full)
        lo = lo_full * e
        hi = hi_full * e

        x = np.zeros(n)
        z = np.clip(np.zeros(m), lo, hi)
        y = np.zeros(m)
        if warm_start is not None:
            x = np.asarray(warm_start, dtype=float).reshape(n) / d
            z = np.clip(as_ @ x, lo, hi)
        elif self._warm is not None and self._warm[0].size == n and self._warm[1].size == m:
            x = self._warm[0] / d
            y = self._warm[1] * e / cost_scale
            z = np.clip(self._warm[2] * e, lo, hi)

        rho_bar = 0.1
        rho = np.where(is_eq, rho_bar * self.rho_eq_weight, rho_bar)
        if self._rho_hint is not None and self._rho_hint.size == m:
            rho = self._rho_hint.copy()

        def factor(rho_vec):
            # reduced SPD system: (H + sigma I + A' R A) x = rhs
            reduced = hs + self.sigma * np.eye(n) + (as_.T * rho_vec) @ as_
            return scipy.linalg.cho_factor(reduced, lower=True, check_finite=False)

        chol = factor(rho)
        status = QpStatus.MAX_ITER
        prim_res = dual_res = np.inf
        iters = 0
        y_prev = y.copy()
        check_every = 10
        # loose ADMM target; the active-set polish closes the gap to tol
        tol_loose = max(100.0 * tol, 1e-3)
        polish_attempts = 0
        best = None  # (score, x_out, y_out, z_out)

        def unscale(x, y, z):
            return x * d, y / e * cost_scale, z / e

        def try_finish(x, y, z):
            """Polish the current iterate; returns final tuple when it meets tol."""
            x_out, y_out, z_out = unscale(x, y, z)
            candidates = [(x_out, y_out)]
            polished = self._polish(p, a_full, lo_full, hi_full, x_out, y_out)
            if polished is not None:
                candidates.insert(0, polished)
            outcome = None
            for xc, yc in candidates:
                score = max(kkt_residuals(p, xc, a_full, lo_full, hi_full, yc))
                if outcome is None or score < outcome[0]:
                    zc = np.clip(a_full @ xc, lo_full, hi_full)
                    outcome = (score, xc, yc, zc)
            return outcome

        for iters in range(1, max_iter + 1):
            rhs = self.sigma * x - fs + as_.T @ (rho * z - y)
            x_tilde = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
            z_tilde = as_ @ x_tilde
            x_new = self.alpha_relax * x_tilde + (1.0 - self.alpha_relax) * x
            z_relax = self.alpha_relax * z_tilde + (1.0 - self.alpha_relax) * z
            z_new = np.clip(z_relax + y / rho, lo, hi)
            y = y + rho * (z_relax - z_new)
            x, z = x_new, z_new

            if iters % check_every == 0 or iters == max_iter:
                ax = as_ @ x
                prim_res = float(np.max(np.abs((ax - z) / e), initial=0.0))
                dual_scaled = hs @ x + fs + as_.T @ y
                dual_res = float(np.max(np.abs(dual_scaled / d), initial=0.0) / cost_scale)
                converged = prim_res <= tol and dual_res <= tol
                # the active set settles long before the dual tail converges,
                # so attempt the polish as soon as the iterate is near-feasible
                polish_due = iters % 50 == 0 and prim_res <= tol_loose and polish_attempts < 40
                if converged or polish_due:
                    outcome = try_finish(x, y, z)
                    polish_attempts += 1
                    if best is None or outcome[0] < best[0]:
                        best = outcome
                    if best[0] <= tol or converged:
                        status = QpStatus.OPTIMAL
                        break
                # divergence certificate: runaway iterates mean no KKT point exists
                norm_x = float(np.linalg.norm(x))
                if not np.isfinite(norm_x) or norm_x > 1e6:
                    status = QpStatus.INFEASIBLE
                    break
                dy = y - y_prev
                if float(np.linalg.norm(dy)) > 1e-12:
                    support = float(np.where(dy > 0, np.where(np.isfinite(hi), hi, 1e30), np.where(np.isfinite(lo), lo, -1e30)) @ dy)
                    if float(np.max(np.abs(as_.T @ dy))) <= 1e-10 * float(np.linalg.norm(dy)) and support < -1e-8:
                        status = QpStatus.INFEASIBLE
                        break
                y_prev = y.copy()
                if iters % 30 == 0 and prim_res > 0 and dual_res > 0:
                    # push toward balanced residuals; raising rho (primal stuck)
                    # is safe and fast, lowering it is clamped hard because one
                    # bad estimate can otherwise strand the iteration
                    ratio = np.sqrt(prim_res / max(dual_res, 1e-16))
                    if ratio > 2.0 or ratio < 0.5:
                        rho = np.clip(rho * np.clip(ratio, 0.2, 1e3), 1e-6, 1e6)
                        chol = factor(rho)

        x_raw, y_raw, z_raw = unscale(x, y, z)
        # warm state is the raw ADMM iterate; polished outputs would restart badly
        self._warm = (x_raw.copy(), y_raw.copy(), z_raw.copy())
        self._rho_hint = rho.copy()

        if status is QpStatus.INFEASIBLE:
            return QpSolution(x_raw, status, iters, prim_res, dual_res, p.objective(x_raw), y=y_raw, z=z_raw)

        final = try_finish(x, y, z)
        if best is None or final[0] < best[0]:
            best = final
        score, x_out, y_out, z_out = best
        stat, prim, comp = kkt_residuals(p, x_out, a_full, lo_full, hi_full, y_out)
        prim_res, dual_res = prim, max(stat, comp)
        status = QpStatus.OPTIMAL if score <= tol else QpStatus.MAX_ITER
        return QpSolution(x_out, status, iters, prim_res, dual_res, p.objective(x_out), y=y_out, z=z_out)

    def _polish(self, p, a, lo, hi, x, y, max_refine: int = 12):
        """Active-set polish with refinement.

        Starts from the set the ADMM iterate suggests, then alternates: solve
        the equality-constrained KKT system, drop wrong-sign multipliers, add
        violated rows. The slowly-converging duals often mislabel a few rows,
        so the refinement, not the initial guess, is what reaches KKT ~1e-10.
        """
        m = a.shape[0]
        ax = a @ x
        scale = 1.0 + float(np.max(np.abs(ax), initial=0.0))
        tol_act = 1e-7 * scale
        is_eq = np.isfinite(lo) & (lo == hi)
        active_hi = np.isfinite(hi) & ((hi - ax <= tol_act) | (y > tol_act)) | is_eq
        active_lo = np.isfinite(lo) & ((ax - lo <= tol_act) | (y < -tol_act)) & ~active_hi

        best = None
        for _ in range(max_refine):
            solved = self._active_set_solve(p, a, lo, hi, active_hi, active_lo)
            if solved is None:
                break
            xp, yp = solved
            score = max(kkt_residuals(p, xp, a, lo, hi, yp))
            if best is None or score < best[0]:
                best = (score, xp, yp)
            axp = a @ xp
            feas_tol = 1e-9 * scale
            add_hi = np.isfinite(hi) & (axp - hi > feas_tol) & ~active_hi
            add_lo = np.isfinite(lo) & (lo - axp > feas_tol) & ~active_lo & ~active_hi
            drop_hi = active_hi & ~is_eq & (yp < -feas_tol)
            drop_lo = active_lo & (yp > feas_tol)
            if not (np.any(add_hi) or np.any(add_lo) or np.any(drop_hi) or np.any(drop_lo)):
                break
            active_hi = (active_hi & ~drop_hi) | add_hi
            active_lo = (active_lo & ~drop_lo) | add_lo
        if best is None:
            return None
        return best[1], best[2]

    def _active_set_solve(self, p, a, lo, hi, active_hi, active_lo):
        active = active_hi | active_lo
        if not np.any(active):
            try:
                xp = np.linalg.solve(p.h + 1e-12 * np.eye(p.n), -p.f)
            except np.linalg.LinAlgError:
                return None
            return xp, np.zeros(a.shape[0])
        idx = np.nonzero(active)[0]
        a_act = a[idx]
        b_act = np.where(active_hi[idx], hi[idx], lo[idx])
        k = idx.size
        kkt = np.zeros((p.n + k, p.n + k))
        kkt[: p.n, : p.n] = p.h + 1e-9 * np.eye(p.n)
        kkt[: p.n, p.n :] = a_act.T
        kkt[p.n :, : p.n] = a_act
        kkt[p.n :, p.n :] = -1e-9 * np.eye(k)
        rhs = np.concatenate([-p.f, b_act])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        # one iterative-refinement pass against the unregularized system
        resid = rhs - np.concatenate(
            [p.h @ sol[: p.n] + a_act.T @ sol[p.n :], a_act @ sol[: p.n]]
        )
        try:
            sol = sol + np.linalg.solve(kkt, resid)
        except np.linalg.LinAlgError:
            pass
        xp = sol[: p.n]
        if not np.all(np.isfinite(xp)):
            return None
        yp = np.zeros(a.shape[0])
        yp[idx] = sol[p.n :]
        return xp, yp


def qp_solve(
    p: QpProblem,
    warm_start: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 4000,
) -> QpSolution:
    """One-shot solve with a fresh workspace."""
    return QpSolver().solve(p, warm_start=warm_start, tol=tol, max_iter=max_iter)


def dump_problem(p: QpProblem, path) -> None:
    """Text dump: 'n p m' dimensions line, then row-major H, f, A_eq, b_eq, A_in, b_in, lb, ub."""
    n = p.n
    n_eq = 0 if p.a_eq is None else p.a_eq.shape[0]
    n_in = 0 if p.a_in is None else p.a_in.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {n_eq} {n_in}\n")

        def block(mat):
            for row in np.atleast_2d(mat):
                fh.write(" ".join(repr(float(v)) for v in np.atleast_1d(row)) + "\n")

        block(p.h)
        block(p.f)
        if n_eq:
            block(p.a_eq)
            block(p.b_eq)
        if n_in:
            block(p.a_in)
            block(p.b_in)
        block(p.lb)
        block(p.ub)


def load_problem(path) -> QpProblem:
    with open(path, "r", encoding="utf-8") as fh:
        n, n_eq, n_in = (int(v) for v in fh.readline().split())
        rows = [np.fromstring(line, sep=" ") for line in fh if line.strip()]
    idx = 0

    def take(count):
        nonlocal idx
        out = np.array(rows[idx : idx + count])
        idx += count
        return out

    h = take(n)
    f = take(1).reshape(n)
    a_eq = b_eq = a_in = b_in = None
    if n_eq:
        a_eq = take(n_eq)
        b_eq = take(1).reshape(n_eq)
    if n_in:
        a_in = take(n_in)
        b_in = take(1).reshape(n_in)
    lb = take(1).reshape(n)
    ub = take(1).reshape(n)
    return QpProblem(h=h, f=f, a_eq=a_eq, b_eq=b_eq, a_in=a_in, b_in=b_in, lb=lb, ub=ub)
