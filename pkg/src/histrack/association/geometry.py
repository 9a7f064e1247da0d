"""Box geometry. Boxes are ``(left, top, width, height)`` in pixels."""

from __future__ import annotations

import numpy as np


def tlwh_to_xyah(box) -> np.ndarray:
    """(left, top, w, h) -> (center x, center y, aspect w/h, h)."""
    l, t, w, h = (float(v) for v in box)
    return np.array([l + w / 2.0, t + h / 2.0, w / h, h])


def xyah_to_tlwh(xyah) -> np.ndarray:
    cx, cy, a, h = (float(v) for v in xyah[:4])
    w = a * h
    return np.array([cx - w / 2.0, cy - h / 2.0, w, h])


def _check(box) -> tuple[float, float, float, float]:
    l, t, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise ValueError(f"box needs positive extent, got {box}")
    return l, t, w, h


def _inter_union(a, b):
    al, at, aw, ah = _check(a)
    bl, bt, bw, bh = _check(b)
    iw = max(0.0, min(al + aw, bl + bw) - max(al, bl))
    ih = max(0.0, min(at + ah, bt + bh) - max(at, bt))
    inter = iw * ih
    return inter, aw * ah + bw * bh - inter


def iou(a, b) -> float:
    inter, union = _inter_union(a, b)
    # rounding can push identical boxes a hair above 1
    return min(1.0, inter / union)


def giou(a, b) -> float:
    inter, union = _inter_union(a, b)
    al, at, aw, ah = _check(a)
    bl, bt, bw, bh = _check(b)
    hull = (max(al + aw, bl + bw) - min(al, bl)) * (max(at + ah, bt + bh) - min(at, bt))
    return min(1.0, inter / union) - max(0.0, hull - union) / hull


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU, vectorized; rows index ``boxes_a``."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.clip(np.minimum(ax2[:, None], bx2[None]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(ay2[:, None], by2[None]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.minimum(inter / union, 1.0)
