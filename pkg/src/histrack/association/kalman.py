"""Constant-velocity Kalman filter on (cx, cy, aspect, h) with velocities.

Noise levels scale with the box height, following the DeepSORT/ByteTrack
convention.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .geometry import tlwh_to_xyah, xyah_to_tlwh

STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160
EMBED_UNIT_TOL = 1e-6

_NDIM = 4
MOTION_MAT = np.eye(2 * _NDIM)
MOTION_MAT[:_NDIM, _NDIM:] = np.eye(_NDIM)
UPDATE_MAT = np.eye(_NDIM, 2 * _NDIM)


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    REMOVED = "removed"


ALLOWED_TRANSITIONS = {
    TrackStatus.TENTATIVE: {TrackStatus.CONFIRMED, TrackStatus.REMOVED},
    TrackStatus.CONFIRMED: {TrackStatus.LOST},
    TrackStatus.LOST: {TrackStatus.CONFIRMED, TrackStatus.REMOVED},
    TrackStatus.REMOVED: set(),
}


@dataclass(frozen=True)
class Detection:
    box: tuple
    confidence: float
    embedding: np.ndarray

    def __post_init__(self):
        box = tuple(float(v) for v in self.box)
        if len(box) != 4 or box[2] <= 0 or box[3] <= 0:
            raise ValueError(f"detection box must be (l, t, w>0, h>0), got {self.box}")
        emb = np.asarray(self.embedding, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(emb) - 1.0) > EMBED_UNIT_TOL:
            raise ValueError(f"embedding norm {np.linalg.norm(emb):.9g} is not 1")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "confidence", float(self.confidence))
        object.__setattr__(self, "embedding", emb)

    @property
    def xyah(self) -> np.ndarray:
        return tlwh_to_xyah(self.box)


@dataclass(frozen=True)
class Tracklet:
    track_id: int
    kf_mean: np.ndarray
    kf_cov: np.ndarray
    embedding: np.ndarray
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    time_since_update: int = 0

    @property
    def box(self) -> np.ndarray:
        return xyah_to_tlwh(self.kf_mean)

    def with_status(self, status: TrackStatus) -> "Tracklet":
        if status is self.status:
            return self
        if status not in ALLOWED_TRANSITIONS[self.status]:
            raise ValueError(f"illegal track transition {self.status.value} -> {status.value}")
        return replace(self, status=status)


def kf_initiate(det: Detection, track_id: int = 0) -> Tracklet:
    mean = np.r_[det.xyah, np.zeros(_NDIM)]
    h = mean[3]
    std = np.array([
        2 * STD_WEIGHT_POSITION * h,
        2 * STD_WEIGHT_POSITION * h,
        1e-2,
        2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h,
        10 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        10 * STD_WEIGHT_VELOCITY * h,
    ])
    return Tracklet(track_id, mean, np.diag(std**2), det.embedding.copy())


def _process_noise(h: float) -> np.ndarray:
    std = np.array([
        STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2, STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5, STD_WEIGHT_VELOCITY * h,
    ])
    return np.diag(std**2)


def _measurement_noise(h: float) -> np.ndarray:
    std = np.array([STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h])
    return np.diag(std**2)


def kf_predict(t: Tracklet) -> Tracklet:
    if t.status is TrackStatus.REMOVED:
        raise ValueError(f"track {t.track_id} is removed")
    mean = MOTION_MAT @ t.kf_mean
    cov = MOTION_MAT @ t.kf_cov @ MOTION_MAT.T + _process_noise(t.kf_mean[3])
    return replace(t, kf_mean=mean, kf_cov=0.5 * (cov + cov.T), time_since_update=t.time_since_update + 1)


def kf_project(t: Tracklet) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the track in measurement space."""
    mean = UPDATE_MAT @ t.kf_mean
    cov = UPDATE_MAT @ t.kf_cov @ UPDATE_MAT.T + _measurement_noise(t.kf_mean[3])
    return mean, cov


def kf_update(t: Tracklet, det: Detection) -> Tracklet:
    proj_mean, proj_cov = kf_project(t)
    try:
        chol = scipy.linalg.cho_factor(proj_cov, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"innovation covariance of track {t.track_id} is not positive definite") from exc
    gain = scipy.linalg.cho_solve(chol, (t.kf_cov @ UPDATE_MAT.T).T).T
    innovation = det.xyah - proj_mean
    mean = t.kf_mean + gain @ innovation
    cov = t.kf_cov - gain @ proj_cov @ gain.T
    return replace(t, kf_mean=mean, kf_cov=0.5 * (cov + cov.T), hits=t.hits + 1, time_since_update=0)


def mahalanobis_sq(t: Tracklet, measurements) -> np.ndarray:
    """Squared Mahalanobis distance of each (cx, cy, a, h) row to the track."""
    mean, cov = kf_project(t)
    d = np.asarray(measurements, dtype=np.float64).reshape(-1, _NDIM) - mean
    chol = np.linalg.cholesky(cov)
    z = scipy.linalg.solve_triangular(chol, d.T, lower=True)
    return np.sum(z * z, axis=0)
