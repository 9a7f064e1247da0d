"""Synthetic tracking scenes standing in for a trained detector's output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..association import Detection
from ..metrics import LabeledFrame
from ..tensor_math import make_rng
from .config import Motion, ScenarioConfig

MIN_EXTENT = 1.0


@dataclass(frozen=True)
class FrameObservations:
    frame: int
    detections: tuple
    ground_truth: LabeledFrame


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _trajectories(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Box tracks of shape (num_objects, num_frames, 4) in tlwh."""
    n, t = cfg.num_objects, cfg.num_frames
    aw, ah = cfg.arena
    widths = rng.uniform(0.04, 0.08, n) * aw
    heights = widths * rng.uniform(1.8, 2.6, n)
    frames = np.arange(t, dtype=np.float64)
    centers = np.zeros((n, t, 2))

    if cfg.motion is Motion.CROSSING:
        # pairs of equal-size objects approach along a shared lane, dwell
        # overlapped at the meeting point, then each leaves in a random
        # direction; motion alone cannot tell them apart afterwards
        dwell = 12.0
        meet_t = t / 2.0
        n_lanes = n // 2 + n % 2
        for i in range(n):
            pair = i // 2
            if i % 2 == 1:
                widths[i], heights[i] = widths[i - 1], heights[i - 1]
            lane_y = ah * (pair + 1) / (n_lanes + 1)
            if i % 2 == 0:
                meet_x = aw * rng.uniform(0.4, 0.6)
            speed = rng.uniform(1.5, 3.0)
            direction = 1.0 if i % 2 == 0 else -1.0
            exit_dir = direction * rng.choice([-1.0, 1.0])
            before = frames - (meet_t - dwell / 2)
            after = frames - (meet_t + dwell / 2)
            offset = np.where(before < 0, direction * speed * before, 0.0)
            offset = np.where(after > 0, exit_dir * speed * after, offset)
            centers[i, :, 0] = meet_x + offset
            centers[i, :, 1] = lane_y
    else:
        start = np.column_stack([rng.uniform(0.15, 0.85, n) * aw, rng.uniform(0.2, 0.8, n) * ah])
        angle = rng.uniform(0, 2 * np.pi, n)
        speed = rng.uniform(1.0, 3.0, n)
        vel = np.column_stack([np.cos(angle), np.sin(angle)]) * speed[:, None]
        centers = start[:, None, :] + vel[:, None, :] * frames[None, :, None]
        if cfg.motion is Motion.SINUSOIDAL:
            amp = rng.uniform(5.0, 20.0, n)
            period = rng.uniform(20.0, 60.0, n)
            perp = np.column_stack([-np.sin(angle), np.cos(angle)])
            wave = amp[:, None] * np.sin(2 * np.pi * frames[None, :] / period[:, None])
            centers = centers + perp[:, None, :] * wave[:, :, None]
        # reflect off the arena walls so objects stay inside
        for axis, (size, half) in enumerate(((aw, widths / 2), (ah, heights / 2))):
            lo = half[:, None]
            span = size - 2 * half[:, None]
            x = np.mod(centers[:, :, axis] - lo, 2 * span)
            centers[:, :, axis] = lo + np.where(x > span, 2 * span - x, x)

    boxes = np.empty((n, t, 4))
    boxes[:, :, 0] = centers[:, :, 0] - widths[:, None] / 2
    boxes[:, :, 1] = centers[:, :, 1] - heights[:, None] / 2
    boxes[:, :, 2] = widths[:, None]
    boxes[:, :, 3] = heights[:, None]
    return boxes


def _clamp_box(box: np.ndarray, arena) -> np.ndarray | None:
    l, t = max(box[0], 0.0), max(box[1], 0.0)
    r = min(box[0] + box[2], arena[0])
    b = min(box[1] + box[3], arena[1])
    if r - l < MIN_EXTENT or b - t < MIN_EXTENT:
        return None
    return np.array([l, t, r - l, b - t])


def generate_scenario(cfg: ScenarioConfig) -> list[FrameObservations]:
    """Ground truth plus noisy detections for every frame, fully determined by ``cfg.seed``.

    Detections of real objects come first in each frame (object order), then
    false positives.
    """
    rng = make_rng(cfg.seed)
    d = cfg.embed_dim
    prototypes = _unit(rng.standard_normal((cfg.num_objects, d))) if cfg.num_objects else np.zeros((0, d))
    tracks = _trajectories(cfg, rng)
    dip_left = np.zeros(cfg.num_objects, dtype=np.int64)
    out = []
    for t in range(cfg.num_frames):
        frame = t + 1
        gt_entries = []
        dets = []
        for i in range(cfg.num_objects):
            gt_box = _clamp_box(tracks[i, t], cfg.arena)
            if gt_box is None:
                continue
            gt_entries.append((i + 1, tuple(gt_box)))
            if dip_left[i] == 0 and cfg.dip_prob > 0 and rng.random() < cfg.dip_prob:
                dip_left[i] = cfg.dip_len
            if cfg.miss_prob > 0 and rng.random() < cfg.miss_prob:
                dip_left[i] = max(dip_left[i] - 1, 0)
                continue
            jitter = rng.normal(0.0, cfg.pos_noise_sigma, 4) if cfg.pos_noise_sigma > 0 else np.zeros(4)
            jitter[2:] *= 0.5
            box = _clamp_box(gt_box + jitter, cfg.arena)
            if box is None:
                continue
            mean_conf = cfg.dip_conf if dip_left[i] > 0 else cfg.conf_mean_hit
            dip_left[i] = max(dip_left[i] - 1, 0)
            conf = float(np.clip(rng.normal(mean_conf, cfg.conf_sigma), 0.0, 1.0))
            noise = rng.normal(0.0, cfg.embed_noise_sigma, d) if cfg.embed_noise_sigma > 0 else np.zeros(d)
            dets.append(Detection(tuple(box), conf, _unit(prototypes[i] + noise)))
        for _ in range(rng.poisson(cfg.false_pos_rate) if cfg.false_pos_rate > 0 else 0):
            w = rng.uniform(0.03, 0.08) * cfg.arena[0]
            h = w * rng.uniform(1.5, 2.5)
            l = rng.uniform(0, cfg.arena[0] - w)
            top = rng.uniform(0, max(cfg.arena[1] - h, 1.0))
            box = _clamp_box(np.array([l, top, w, h]), cfg.arena)
            if box is None:
                continue
            conf = float(np.clip(rng.normal(cfg.conf_mean_fp, cfg.conf_sigma), 0.0, 1.0))
            dets.append(Detection(tuple(box), conf, _unit(rng.standard_normal(d))))
        out.append(FrameObservations(frame, tuple(dets), LabeledFrame(frame, tuple(gt_entries))))
    return out


def prototype_separability(cfg: ScenarioConfig, draws: int = 10_000) -> tuple[float, float]:
    """Monte-Carlo mean cosine of (same-identity, cross-identity) noisy embeddings."""
    rng = make_rng(cfg.seed)
    d = cfg.embed_dim
    a = _unit(rng.standard_normal((draws, d)))
    b = _unit(rng.standard_normal((draws, d)))
    noise = lambda: rng.normal(0.0, cfg.embed_noise_sigma, (draws, d))  # noqa: E731
    same = np.sum(_unit(a + noise()) * _unit(a + noise()), axis=1)
    cross = np.sum(_unit(a + noise()) * _unit(b + noise()), axis=1)
    return float(same.mean()), float(cross.mean())
