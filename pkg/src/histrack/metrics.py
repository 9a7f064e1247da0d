"""CLEAR-MOT (MOTA), identity (IDF1) and HOTA tracking metrics.

Ground truth and results are sequences of :class:`LabeledFrame`. Frames are
aligned by number; a frame missing from one stream counts as empty there.
Box similarity is IoU throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .association.geometry import iou_matrix

EPS = np.finfo(float).eps
HOTA_ALPHAS = np.arange(0.05, 0.99, 0.05)


class MetricError(ValueError):
    """The streams cannot be scored (for instance, no ground truth at all)."""


@dataclass(frozen=True)
class LabeledFrame:
    frame: int
    entries: tuple = ()

    def __post_init__(self):
        entries = tuple((int(i), tuple(float(v) for v in box)) for i, box in self.entries)
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate identity in frame {self.frame}")
        object.__setattr__(self, "entries", entries)

    @property
    def ids(self) -> np.ndarray:
        return np.array([i for i, _ in self.entries], dtype=np.int64)

    @property
    def boxes(self) -> np.ndarray:
        return np.array([b for _, b in self.entries], dtype=np.float64).reshape(-1, 4)


@dataclass
class MetricReport:
    mota: float = float("nan")
    idf1: float = float("nan")
    hota: float = float("nan")
    deta: float = float("nan")
    assa: float = float("nan")
    tp: int = 0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    hota_alpha: np.ndarray = field(default=None, repr=False)
    deta_alpha: np.ndarray = field(default=None, repr=False)
    assa_alpha: np.ndarray = field(default=None, repr=False)

    SCALARS = ("mota", "idf1", "hota", "deta", "assa", "tp", "fp", "fn", "idsw")

    def as_text(self, keys=None) -> str:
        lines = []
        for k in keys or self.SCALARS:
            v = getattr(self, k)
            lines.append(f"{k}: {v:.6f}" if isinstance(v, float) else f"{k}: {v}")
        return "\n".join(lines) + "\n"

    def as_rows(self, keys=None) -> list[tuple[str, float]]:
        return [(k, getattr(self, k)) for k in keys or self.SCALARS]


def _aligned(gt, res):
    gt_map = {f.frame: f for f in gt}
    res_map = {f.frame: f for f in res}
    if not any(len(f.entries) for f in gt_map.values()):
        raise MetricError("ground truth is empty; metrics are undefined")
    for t in sorted(set(gt_map) | set(res_map)):
        yield (
            gt_map.get(t, LabeledFrame(t)),
            res_map.get(t, LabeledFrame(t)),
        )


def _sim(g: LabeledFrame, r: LabeledFrame) -> np.ndarray:
    return iou_matrix(g.boxes, r.boxes)


def clear_mot(gt, res, iou_thresh: float = 0.5) -> dict:
    """CLEAR-MOT counts with carry-over of the previous frame's matches."""
    tp = fn = fp = idsw = n_gt = 0
    prev_step: dict[int, int] = {}  # gt id -> tracker id matched in the previous frame
    last_match: dict[int, int] = {}  # gt id -> tracker id of its most recent match
    for g, r in _aligned(gt, res):
        n_gt += len(g.entries)
        if not len(g.entries) or not len(r.entries):
            fn += len(g.entries)
            fp += len(r.entries)
            prev_step = {}
            continue
        sim = _sim(g, r)
        g_ids, r_ids = g.ids, r.ids
        carry = np.array([[prev_step.get(gi) == ri for ri in r_ids] for gi in g_ids])
        score = 1000.0 * carry + sim
        score[sim < iou_thresh - EPS] = 0.0
        rows, cols = linear_sum_assignment(-score)
        keep = score[rows, cols] > 0
        rows, cols = rows[keep], cols[keep]
        step: dict[int, int] = {}
        for i, j in zip(rows, cols):
            gi, rj = int(g_ids[i]), int(r_ids[j])
            if gi in last_match and last_match[gi] != rj:
                idsw += 1
            last_match[gi] = rj
            step[gi] = rj
        prev_step = step
        tp += len(rows)
        fn += len(g_ids) - len(rows)
        fp += len(r_ids) - len(rows)
    mota = (tp - fp - idsw) / n_gt
    return {"mota": mota, "tp": tp, "fp": fp, "fn": fn, "idsw": idsw, "n_gt": n_gt}


def mota(gt, res, iou_thresh: float = 0.5) -> tuple[float, dict]:
    counts = clear_mot(gt, res, iou_thresh)
    return counts["mota"], counts


def _id_index(frames):
    ids = sorted({i for f in frames for i, _ in f.entries})
    return {v: k for k, v in enumerate(ids)}


def idf1(gt, res, iou_thresh: float = 0.5) -> float:
    """IDF1 under the identity correspondence that maximizes IDTP."""
    pairs = list(_aligned(gt, res))
    gi = _id_index(g for g, _ in pairs)
    ri = _id_index(r for _, r in pairs)
    overlap = np.zeros((len(gi), len(ri)))
    n_gt = n_res = 0
    for g, r in pairs:
        n_gt += len(g.entries)
        n_res += len(r.entries)
        if not len(g.entries) or not len(r.entries):
            continue
        hit = _sim(g, r) >= iou_thresh - EPS
        gr = np.array([gi[int(i)] for i in g.ids])
        rr = np.array([ri[int(i)] for i in r.ids])
        overlap[np.ix_(gr, rr)] += hit
    if overlap.size:
        rows, cols = linear_sum_assignment(-overlap)
        idtp = overlap[rows, cols].sum()
    else:
        idtp = 0.0
    idfn, idfp = n_gt - idtp, n_res - idtp
    return float(2 * idtp / max(1.0, 2 * idtp + idfp + idfn))


def hota(gt, res) -> MetricReport:
    """HOTA, DetA and AssA averaged over localization thresholds 0.05..0.95.

    Each frame is matched once, maximizing IoU weighted by the global
    alignment score of the identity pair; matches are then thresholded at
    every alpha.
    """
    pairs = list(_aligned(gt, res))
    gi = _id_index(g for g, _ in pairs)
    ri = _id_index(r for _, r in pairs)
    n_a = len(HOTA_ALPHAS)
    potential = np.zeros((len(gi), len(ri)))
    gt_count = np.zeros(len(gi))
    res_count = np.zeros(len(ri))
    per_frame = []
    for g, r in pairs:
        gr = np.array([gi[int(i)] for i in g.ids], dtype=np.int64)
        rr = np.array([ri[int(i)] for i in r.ids], dtype=np.int64)
        sim = _sim(g, r)
        per_frame.append((gr, rr, sim))
        if len(gr) and len(rr):
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            norm = np.zeros_like(sim)
            ok = denom > EPS
            norm[ok] = sim[ok] / denom[ok]
            potential[np.ix_(gr, rr)] += norm
        gt_count[gr] += 1
        res_count[rr] += 1
    align = potential / np.maximum(EPS, gt_count[:, None] + res_count[None, :] - potential)

    tp = np.zeros(n_a)
    fn = np.zeros(n_a)
    fp = np.zeros(n_a)
    matches = np.zeros((n_a, len(gi), len(ri)))
    for gr, rr, sim in per_frame:
        if not len(gr) or not len(rr):
            fn += len(gr)
            fp += len(rr)
            continue
        score = align[np.ix_(gr, rr)] * sim
        rows, cols = linear_sum_assignment(-score)
        for a, alpha in enumerate(HOTA_ALPHAS):
            ok = sim[rows, cols] >= alpha - EPS
            n = int(ok.sum())
            tp[a] += n
            fn[a] += len(gr) - n
            fp[a] += len(rr) - n
            matches[a, gr[rows[ok]], rr[cols[ok]]] += 1

    assa_alpha = np.zeros(n_a)
    for a in range(n_a):
        m = matches[a]
        ass = m / np.maximum(1.0, gt_count[:, None] + res_count[None, :] - m)
        assa_alpha[a] = (m * ass).sum() / max(1.0, tp[a])
    deta_alpha = tp / np.maximum(1.0, tp + fn + fp)
    hota_alpha = np.sqrt(deta_alpha * assa_alpha)
    return MetricReport(
        hota=float(hota_alpha.mean()),
        deta=float(deta_alpha.mean()),
        assa=float(assa_alpha.mean()),
        hota_alpha=hota_alpha,
        deta_alpha=deta_alpha,
        assa_alpha=assa_alpha,
    )


def evaluate(gt, res, iou_thresh: float = 0.5) -> MetricReport:
    gt, res = list(gt), list(res)
    report = hota(gt, res)
    counts = clear_mot(gt, res, iou_thresh)
    report.mota = counts["mota"]
    report.tp, report.fp, report.fn, report.idsw = counts["tp"], counts["fp"], counts["fn"], counts["idsw"]
    report.idf1 = idf1(gt, res, iou_thresh)
    return report
