"""Online association: fused appearance/motion cost, two-stage matching, EMA
embeddings and the track lifecycle."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .assignment import CostMatrix, hungarian_assign
from .geometry import iou_matrix
from .kalman import (
    Detection,
    Tracklet,
    TrackStatus,
    kf_initiate,
    kf_predict,
    kf_update,
    mahalanobis_sq,
)

logger = logging.getLogger(__name__)

# chi-square 0.95 quantile, 4 degrees of freedom
CHI2_95_4DOF = 9.4877


class SequenceError(RuntimeError):
    """Frames were fed out of temporal order."""


@dataclass(frozen=True)
class AssociationConfig:
    lambda_fuse: float = 0.99
    eta_ema: float = 0.9
    tau_high: float = 0.6
    tau_low: float = 0.1
    gate_chi2: float = CHI2_95_4DOF
    cost_reject: float = 0.7
    cost_reject_second: float = 0.5
    max_age: int = 30
    n_init: int = 3
    second_stage: bool = True
    # when a tentative track confirms, also emit the records it accumulated
    backfill: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lambda_fuse <= 1.0:
            raise ValueError(f"lambda_fuse must be in [0, 1], got {self.lambda_fuse}")
        if not 0.0 <= self.eta_ema <= 1.0:
            raise ValueError(f"eta_ema must be in [0, 1], got {self.eta_ema}")
        if self.tau_low > self.tau_high:
            raise ValueError("tau_low must not exceed tau_high")
        if self.max_age < 0 or self.n_init < 1:
            raise ValueError("max_age must be >= 0 and n_init >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OutputRecord:
    frame: int
    track_id: int
    box: tuple
    confidence: float


def ema_update(f_prev, f_obs, eta: float) -> np.ndarray:
    """Exponential moving average of embeddings, re-normalized to unit length."""
    f_prev = np.asarray(f_prev, dtype=np.float64)
    if eta == 1.0:
        return f_prev.copy()
    raw = eta * f_prev + (1.0 - eta) * np.asarray(f_obs, dtype=np.float64)
    norm = np.linalg.norm(raw)
    if norm < 1e-12:
        return f_prev.copy()
    return raw / norm


def appearance_cost(tracks, dets) -> np.ndarray:
    if not tracks or not dets:
        return np.zeros((len(tracks), len(dets)))
    t = np.stack([tr.embedding for tr in tracks])
    d = np.stack([det.embedding for det in dets])
    return np.clip(1.0 - t @ d.T, 0.0, 2.0)


def motion_cost(tracks, dets) -> np.ndarray:
    return 1.0 - iou_matrix([tr.box for tr in tracks], [d.box for d in dets])


def gate_matrix(tracks, dets, gate_chi2: float) -> np.ndarray:
    gated = np.zeros((len(tracks), len(dets)), dtype=bool)
    if not tracks or not dets:
        return gated
    meas = np.stack([d.xyah for d in dets])
    for i, tr in enumerate(tracks):
        gated[i] = mahalanobis_sq(tr, meas) > gate_chi2
    return gated


def build_fused_cost(tracks, dets, cfg: AssociationConfig) -> CostMatrix:
    """``lambda * appearance + (1 - lambda) * motion`` with a Mahalanobis gate."""
    lam = cfg.lambda_fuse
    if lam == 1.0:
        values = appearance_cost(tracks, dets)
    elif lam == 0.0:
        values = motion_cost(tracks, dets)
    else:
        values = lam * appearance_cost(tracks, dets) + (1.0 - lam) * motion_cost(tracks, dets)
    return CostMatrix(values, gate_matrix(tracks, dets, cfg.gate_chi2))


def build_motion_cost(tracks, dets, cfg: AssociationConfig) -> CostMatrix:
    return CostMatrix(motion_cost(tracks, dets), gate_matrix(tracks, dets, cfg.gate_chi2))


class Tracker:
    """Sequential per-sequence tracker; feed frames in increasing order."""

    def __init__(self, cfg: AssociationConfig = AssociationConfig()):
        self.cfg = cfg
        self.tracks: list[Tracklet] = []
        self.removed: list[Tracklet] = []
        self.last_frame: int | None = None
        self._next_id = 1
        self.last_matches: list[tuple[Tracklet, Detection]] = []
        self._pending: dict[int, list[OutputRecord]] = {}

    def _new_id(self) -> int:
        tid = self._next_id
        self._next_id += 1
        return tid

    def _match(self, tracks, dets, cost: CostMatrix, reject: float):
        a = hungarian_assign(cost, reject)
        return (
            [(tracks[i], dets[j], i, j) for i, j in a.matches],
            [tracks[i] for i in a.unmatched_rows],
            [dets[j] for j in a.unmatched_cols],
        )

    def _apply(self, track: Tracklet, det: Detection) -> Tracklet:
        t = kf_update(track, det)
        t = replace(t, embedding=ema_update(t.embedding, det.embedding, self.cfg.eta_ema))
        if t.status is TrackStatus.TENTATIVE and t.hits >= self.cfg.n_init:
            t = t.with_status(TrackStatus.CONFIRMED)
        elif t.status is TrackStatus.LOST:
            t = t.with_status(TrackStatus.CONFIRMED)
        return t

    def associate_frame(self, frame: int, dets: list[Detection]) -> list[OutputRecord]:
        """Advance one frame and return records for confirmed, updated tracks.

        With ``backfill`` on, the frame in which a track confirms also returns
        the records held back while it was tentative (earlier frame numbers).
        """
        if self.last_frame is not None and frame <= self.last_frame:
            raise SequenceError(f"frame {frame} arrived after frame {self.last_frame}")
        self.last_frame = frame
        cfg = self.cfg

        predicted = [kf_predict(t) for t in self.tracks]
        pool = [t for t in predicted if t.status in (TrackStatus.CONFIRMED, TrackStatus.LOST)]
        tentative = [t for t in predicted if t.status is TrackStatus.TENTATIVE]
        high = [d for d in dets if d.confidence >= cfg.tau_high]
        low = [d for d in dets if cfg.tau_low <= d.confidence < cfg.tau_high]

        matched: list[tuple[Tracklet, Detection]] = []

        # stage 1: confident detections vs confirmed and lost tracks, fused cost
        m1, rest_tracks, rest_high = self._match(pool, high, build_fused_cost(pool, high, cfg), cfg.cost_reject)
        matched += [(t, d) for t, d, _, _ in m1]

        # stage 2: leftover tracks vs low-confidence detections, motion only
        if cfg.second_stage and rest_tracks and low:
            m2, rest_tracks, _ = self._match(
                rest_tracks, low, build_motion_cost(rest_tracks, low, cfg), cfg.cost_reject_second
            )
            matched += [(t, d) for t, d, _, _ in m2]

        # tentative tracks only continue on confident detections
        m3, dead_tentative, unmatched_high = self._match(
            tentative, rest_high, build_fused_cost(tentative, rest_high, cfg), cfg.cost_reject
        )
        matched += [(t, d) for t, d, _, _ in m3]

        survivors: list[Tracklet] = []
        records: list[OutputRecord] = []
        for t, d in matched:
            was_tentative = t.status is TrackStatus.TENTATIVE
            t = self._apply(t, d)
            survivors.append(t)
            rec = OutputRecord(frame, t.track_id, d.box, d.confidence)
            if t.status is TrackStatus.CONFIRMED:
                if was_tentative and cfg.backfill:
                    records.extend(self._pending.pop(t.track_id, []))
                records.append(rec)
            elif cfg.backfill:
                self._pending.setdefault(t.track_id, []).append(rec)
        self.last_matches = matched

        for t in rest_tracks:
            if t.status is TrackStatus.CONFIRMED:
                t = t.with_status(TrackStatus.LOST)
            if t.time_since_update > cfg.max_age:
                self.removed.append(t.with_status(TrackStatus.REMOVED))
            else:
                survivors.append(t)
        for t in dead_tentative:
            self._pending.pop(t.track_id, None)
            self.removed.append(t.with_status(TrackStatus.REMOVED))

        for d in unmatched_high:
            t = kf_initiate(d, self._new_id())
            if cfg.n_init <= 1:
                t = t.with_status(TrackStatus.CONFIRMED)
                records.append(OutputRecord(frame, t.track_id, d.box, d.confidence))
            elif cfg.backfill:
                self._pending[t.track_id] = [OutputRecord(frame, t.track_id, d.box, d.confidence)]
            survivors.append(t)

        survivors.sort(key=lambda t: t.track_id)
        self.tracks = survivors
        records.sort(key=lambda r: (r.frame, r.track_id))
        logger.debug("frame %d: %d dets, %d tracks, %d records", frame, len(dets), len(survivors), len(records))
        return records
