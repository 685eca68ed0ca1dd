"""Linear Kalman filtering for one radar-target pair.

State is (x, y, vx, vy) with a constant-velocity motion model and discrete
white-noise-acceleration process noise; measurements are positions with
isotropic noise (constant SNR keeps the measurement noise constant). All
operations are pure: they return new Track values.
"""

from dataclasses import dataclass, replace

import numpy as np

from .geometry import Ellipse, ellipse_from_covariance

# Broad prior for a freshly initialized track: position from one noisy
# observation, velocity unknown.
INIT_COV_DIAG = (4.0, 4.0, 2.0, 2.0)


class TrackingError(ValueError):
    pass


@dataclass(frozen=True)
class KalmanConfig:
    """Filter constants: DWNA intensity q, measurement sigma, step length."""

    process_noise_q: float = 0.05
    meas_noise_sigma: float = 0.5
    dt: float = 1.0

    def __post_init__(self):
        if self.process_noise_q < 0:
            raise TrackingError(f"process_noise_q must be >= 0, got {self.process_noise_q}")
        if self.meas_noise_sigma <= 0:
            raise TrackingError(f"meas_noise_sigma must be > 0, got {self.meas_noise_sigma}")
        if self.dt <= 0:
            raise TrackingError(f"dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class Track:
    """Kalman state for one radar-target pair."""

    mean: np.ndarray
    cov: np.ndarray
    steps_since_update: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(4))
        cov = np.asarray(self.cov, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def position(self):
        return self.mean[:2]

    @property
    def velocity(self):
        return self.mean[2:]

    @property
    def position_cov(self):
        return self.cov[:2, :2]


def init_track(observed_position) -> Track:
    """Fresh track: observed position, zero velocity, broad prior covariance."""
    mean = np.zeros(4)
    mean[:2] = np.asarray(observed_position, dtype=np.float64)
    return Track(mean=mean, cov=np.diag(INIT_COV_DIAG), steps_since_update=0)


def transition_matrices(cfg: KalmanConfig):
    """Constant-velocity F and DWNA process noise Q for the given config."""
    dt = cfg.dt
    F = np.eye(4)
    F[0, 2] = dt
    F[1, 3] = dt
    half = 0.5 * dt * dt
    G = np.array([[half, 0.0], [0.0, half], [dt, 0.0], [0.0, dt]])
    Q = cfg.process_noise_q * (G @ G.T)
    return F, Q


def predict(track: Track, cfg: KalmanConfig) -> Track:
    """Time propagation: mean <- F mean, cov <- F cov F^T + Q."""
    F, Q = transition_matrices(cfg)
    return Track(
        mean=F @ track.mean,
        cov=F @ track.cov @ F.T + Q,
        steps_since_update=track.steps_since_update + 1,
    )


def update(track: Track, meas, cfg: KalmanConfig) -> Track:
    """Position-measurement update with Joseph-form covariance."""
    z = np.asarray(meas, dtype=np.float64).reshape(2)
    H = np.zeros((2, 4))
    H[0, 0] = 1.0
    H[1, 1] = 1.0
    R = cfg.meas_noise_sigma**2 * np.eye(2)
    S = track.cov[:2, :2] + R
    # R > 0 makes S positive definite; guard anyway for malformed tracks
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if not np.isfinite(det) or det <= 0:
        raise TrackingError(f"singular innovation covariance, det={det}")
    K = track.cov[:, :2] @ np.linalg.inv(S)
    mean = track.mean + K @ (z - track.mean[:2])
    IKH = np.eye(4) - K @ H
    cov = IKH @ track.cov @ IKH.T + K @ R @ K.T
    return Track(mean=mean, cov=cov, steps_since_update=0)


def position_ellipse(track: Track, scale_k: float = 2.0) -> Ellipse:
    """Confidence ellipse of the position block of the track covariance."""
    return ellipse_from_covariance(track.position, track.position_cov, scale_k)


def predict_means_covs(means, covs, cfg: KalmanConfig):
    """Vectorized predict over arrays of shape (..., 4) and (..., 4, 4).

    Same arithmetic as predict(); used by the simulation to propagate every
    radar-target pair in one shot.
    """
    F, Q = transition_matrices(cfg)
    new_means = means @ F.T
    new_covs = np.einsum("ij,...jk,lk->...il", F, covs, F) + Q
    return new_means, new_covs


def update_mean_cov(mean, cov, z, cfg: KalmanConfig):
    """Array-level single-pair update; same arithmetic as update()."""
    sigma2 = cfg.meas_noise_sigma**2
    S = cov[:2, :2].copy()
    S[0, 0] += sigma2
    S[1, 1] += sigma2
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if not np.isfinite(det) or det <= 0:
        raise TrackingError(f"singular innovation covariance, det={det}")
    Sinv = np.array([[S[1, 1], -S[0, 1]], [-S[1, 0], S[0, 0]]]) / det
    K = cov[:, :2] @ Sinv
    mean = mean + K @ (z - mean[:2])
    IKH = np.eye(4)
    IKH[:, :2] -= K
    cov = IKH @ cov @ IKH.T + sigma2 * (K @ K.T)
    return mean, cov


def update_means_covs(means, covs, zs, cfg: KalmanConfig):
    """Vectorized Joseph-form update over a batch of pairs.

    means (B, 4), covs (B, 4, 4), zs (B, 2); same arithmetic as update().
    """
    means = np.asarray(means, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    sigma2 = cfg.meas_noise_sigma**2
    S = covs[:, :2, :2].copy()
    S[:, 0, 0] += sigma2
    S[:, 1, 1] += sigma2
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    if not np.all(np.isfinite(det)) or np.any(det <= 0):
        raise TrackingError("singular innovation covariance in batch update")
    Sinv = np.empty_like(S)
    Sinv[:, 0, 0] = S[:, 1, 1]
    Sinv[:, 1, 1] = S[:, 0, 0]
    Sinv[:, 0, 1] = -S[:, 0, 1]
    Sinv[:, 1, 0] = -S[:, 1, 0]
    Sinv /= det[:, None, None]
    K = np.einsum("bij,bjk->bik", covs[:, :, :2], Sinv)
    innov = zs - means[:, :2]
    new_means = means + np.einsum("bij,bj->bi", K, innov)
    IKH = np.broadcast_to(np.eye(4), covs.shape).copy()
    IKH[:, :, :2] -= K
    new_covs = np.einsum("bij,bjk,blk->bil", IKH, covs, IKH)
    new_covs += sigma2 * np.einsum("bij,bkj->bik", K, K)
    return new_means, new_covs
