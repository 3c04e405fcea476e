"""Generic additive-noise Unscented Kalman Filter over flat state vectors.

The engine is chart-agnostic: callers with manifold states (quaternions)
filter a local error state and handle injection/retraction themselves.
Process and measurement callables may optionally be vectorized over sigma
points by carrying a truthy ``vectorized`` attribute, in which case they
receive an (n_points, n) array and must return the mapped array. Everything
here is stateless and safe to use from many filters in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError

_JITTER_EYES: dict[int, np.ndarray] = {}


def _jitter_eye(n: int) -> np.ndarray:
    eye = _JITTER_EYES.get(n)
    if eye is None:
        eye = 1e-12 * np.eye(n)
        _JITTER_EYES[n] = eye
    return eye


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and covariance; covariance symmetrized and repaired to PSD on construction."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        n = mean.size
        cov = cov.reshape(n, n)
        cov = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(cov + _jitter_eye(n))
        except np.linalg.LinAlgError:
            # tolerate small negative drift; clip eigenvalues to PSD
            eigval, eigvec = np.linalg.eigh(cov)
            cov = (eigvec * np.clip(eigval, 0.0, None)) @ eigvec.T
            cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SigmaParams:
    alpha_s: float = 1e-1
    beta_s: float = 2.0
    kappa_s: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha_s <= 1.0:
            raise DomainError(f"alpha_s must lie in (0, 1], got {self.alpha_s}")

    def lam(self, n: int) -> float:
        lam = self.alpha_s**2 * (n + self.kappa_s) - n
        if n + lam <= 0.0:
            raise DomainError(f"n + lambda must be positive (n={n}, lambda={lam})")
        return lam


def _sqrt_psd(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular square root; eigenvalue-clip repair before giving up."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eigval, eigvec = np.linalg.eigh(0.5 * (cov + cov.T))
    repaired = (eigvec * np.clip(eigval, 1e-9, None)) @ eigvec.T
    try:
        return np.linalg.cholesky(0.5 * (repaired + repaired.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - repair nearly always succeeds
        raise NumericError("covariance square root failed even after PSD repair") from exc


def sigma_points(
    belief: GaussianBelief, params: SigmaParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merwe-scaled sigma points: ((2n+1, n) points, mean weights, cov weights)."""
    n = belief.dim
    lam = params.lam(n)
    root = _sqrt_psd(belief.covariance) * np.sqrt(n + lam)
    points = np.empty((2 * n + 1, n))
    points[0] = belief.mean
    points[1 : n + 1] = belief.mean + root.T
    points[n + 1 :] = belief.mean - root.T
    w_mean = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    w_cov = w_mean.copy()
    w_mean[0] = lam / (n + lam)
    w_cov[0] = lam / (n + lam) + (1.0 - params.alpha_s**2 + params.beta_s)
    return points, w_mean, w_cov


def _propagate(fn, points: np.ndarray, *args) -> np.ndarray:
    if getattr(fn, "vectorized", False):
        out = np.asarray(fn(points, *args), dtype=float)
        bad = ~np.all(np.isfinite(out), axis=tuple(range(1, out.ndim)))
        if np.any(bad):
            raise NumericError(f"non-finite output at sigma point index {int(np.argmax(bad))}")
        return out
    rows = []
    for idx, point in enumerate(points):
        row = np.asarray(fn(point, *args), dtype=float)
        if not np.all(np.isfinite(row)):
            raise NumericError(f"non-finite output at sigma point index {idx}")
        rows.append(row)
    return np.array(rows)


def unscented_moments(
    mapped: np.ndarray, w_mean: np.ndarray, w_cov: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    mean = w_mean @ mapped
    dev = mapped - mean
    cov = (dev.T * w_cov) @ dev
    return mean, 0.5 * (cov + cov.T)


def ukf_predict(
    belief: GaussianBelief,
    process,
    q_noise: np.ndarray,
    dt: float,
    params: SigmaParams = SigmaParams(),
) -> GaussianBelief:
    """Unscented transform of the process over sigma points plus additive q_noise."""
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    points, w_mean, w_cov = sigma_points(belief, params)
    mapped = _propagate(process, points, dt)
    mean, cov = unscented_moments(mapped, w_mean, w_cov)
    return GaussianBelief(mean, cov + np.asarray(q_noise, dtype=float))


def ukf_update(
    belief: GaussianBelief,
    measurement: np.ndarray,
    h,
    r_noise: np.ndarray,
    params: SigmaParams = SigmaParams(),
) -> tuple[GaussianBelief, np.ndarray, np.ndarray]:
    """Standard unscented update; returns (posterior, innovation, innovation covariance)."""
    measurement = np.asarray(measurement, dtype=float).reshape(-1)
    points, w_mean, w_cov = sigma_points(belief, params)
    mapped = _propagate(h, points)
    z_pred, z_cov = unscented_moments(mapped, w_mean, w_cov)
    s = z_cov + np.asarray(r_noise, dtype=float)
    cross = ((points - belief.mean).T * w_cov) @ (mapped - z_pred)
    try:
        gain = np.linalg.solve(s, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular innovation covariance") from exc
    innovation = measurement - z_pred
    mean = belief.mean + gain @ innovation
    cov = belief.covariance - gain @ s @ gain.T
    return GaussianBelief(mean, cov), innovation, 0.5 * (s + s.T)


@dataclass
class NeesAccumulator:
    """Normalized estimation-error-squared bookkeeping for consistency tests."""

    dim: int
    values: list = field(default_factory=list)

    def add(self, error: np.ndarray, covariance: np.ndarray) -> float:
        nees = float(error @ np.linalg.solve(covariance, error))
        self.values.append(nees)
        return nees
