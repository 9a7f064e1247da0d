"""ReID embedding losses: circle loss with analytic gradients, triplet and
ID-classification baselines, and the weighted overall loss."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

UNIT_TOL = 1e-9
PROB_FLOOR = 1e-12


class NormalizationError(ValueError):
    """An embedding expected to be unit length is not."""


@dataclass(frozen=True)
class SimilarityPairs:
    s_p: np.ndarray
    s_n: np.ndarray

    def __post_init__(self):
        for name in ("s_p", "s_n"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if np.any(np.abs(v) > 1.0 + 1e-9):
                raise ValueError(f"{name} values must lie in [-1, 1]")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class CircleLossParams:
    m: float = 0.25
    gamma: float = 64.0

    def __post_init__(self):
        if not 0.0 < self.m < 1.0:
            raise ValueError(f"margin must be in (0, 1), got {self.m}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def optimum_p(self) -> float:
        return 1.0 + self.m

    @property
    def optimum_n(self) -> float:
        return -self.m

    @property
    def delta_p(self) -> float:
        return 1.0 - self.m

    @property
    def delta_n(self) -> float:
        return self.m


@dataclass(frozen=True)
class LossWeights:
    lambda_reid: float = 1.0
    lambda_det: float = 1.0

    def __post_init__(self):
        if self.lambda_reid < 0 or self.lambda_det < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class IdClassScores:
    """Per-frame ID-class probabilities.

    ``probs[t]`` is an (M_t, K+1) array of probabilities and ``labels[t]`` the
    length-M_t vector of true class indices (the position of the single 1 in
    each indicator row).
    """

    probs: list
    labels: list
    clamped: bool = field(default=False, init=False)

    def __post_init__(self):
        if len(self.probs) != len(self.labels):
            raise ValueError("probs and labels must cover the same frames")
        probs, labels = [], []
        for p, y in zip(self.probs, self.labels):
            p = np.asarray(p, dtype=np.float64).reshape(len(y), -1) if len(y) else np.zeros((0, 1))
            y = np.asarray(y, dtype=np.int64).reshape(-1)
            if p.shape[0] and not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("probability rows must sum to 1")
            if np.any((y < 0) | (y >= p.shape[1])):
                raise ValueError("label outside the class range")
            probs.append(p)
            labels.append(y)
        self.probs, self.labels = probs, labels

    @classmethod
    def from_indicators(cls, probs, indicators) -> "IdClassScores":
        labels = []
        for y in indicators:
            y = np.asarray(y)
            if y.size and not np.all(y.sum(axis=1) == 1):
                raise ValueError("each object needs exactly one positive indicator")
            labels.append(y.argmax(axis=1) if y.size else np.zeros(0, dtype=np.int64))
        return cls(probs, labels)


def _check_unit(v: np.ndarray) -> None:
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise NormalizationError(f"embedding has norm {np.linalg.norm(v):.12g}, expected 1")


def build_similarity_pairs(embeddings_by_frame, adjacent_only: bool = False) -> SimilarityPairs:
    """Cosine similarities of every cross-frame embedding pair.

    Args:
        embeddings_by_frame: one list per frame of ``(unit_vector, identity)``.
        adjacent_only: only pair frame ``f`` with frame ``f + 1``.

    Pairs are emitted frame-major, index-minor: for frames ``a < b``, then
    index ``i`` in ``a``, then index ``j`` in ``b``. Same-identity pairs go to
    ``s_p``, all others to ``s_n``. Within-frame pairs are never emitted.
    """
    frames = []
    for frame in embeddings_by_frame:
        items = []
        for vec, ident in frame:
            v = np.asarray(vec, dtype=np.float64).reshape(-1)
            _check_unit(v)
            items.append((v, ident))
        frames.append(items)
    s_p, s_n = [], []
    for a, b in itertools.combinations(range(len(frames)), 2):
        if adjacent_only and b != a + 1:
            continue
        for va, ida in frames[a]:
            for vb, idb in frames[b]:
                sim = float(np.clip(va @ vb, -1.0, 1.0))
                (s_p if ida == idb else s_n).append(sim)
    return SimilarityPairs(np.array(s_p), np.array(s_n))


def circle_weights(pairs: SimilarityPairs, params: CircleLossParams) -> tuple[np.ndarray, np.ndarray]:
    alpha_p = np.maximum(params.optimum_p - pairs.s_p, 0.0)
    alpha_n = np.maximum(pairs.s_n - params.optimum_n, 0.0)
    return alpha_p, alpha_n


def circle_loss(pairs: SimilarityPairs, params: CircleLossParams = CircleLossParams()):
    """Circle loss and its gradients with respect to ``s_p`` and ``s_n``.

    The weighting factors are treated as constants (detached) when
    differentiating. ``log(1 + sum_n * sum_p)`` is evaluated as
    ``softplus(lse_n + lse_p)`` for stability.

    Returns:
        ``(loss, d_loss_d_sp, d_loss_d_sn)``.
    """
    s_p, s_n = pairs.s_p, pairs.s_n
    zero = (0.0, np.zeros_like(s_p), np.zeros_like(s_n))
    if s_p.size == 0 or s_n.size == 0:
        # an empty sum makes the product vanish: log(1 + 0)
        return zero
    alpha_p, alpha_n = circle_weights(pairs, params)
    logit_p = -params.gamma * alpha_p * (s_p - params.delta_p)
    logit_n = params.gamma * alpha_n * (s_n - params.delta_n)
    lse_p = logsumexp(logit_p)
    lse_n = logsumexp(logit_n)
    z = lse_p + lse_n
    loss = float(np.logaddexp(0.0, z))
    outer = expit(z)
    d_sp = outer * np.exp(logit_p - lse_p) * (-params.gamma * alpha_p)
    d_sn = outer * np.exp(logit_n - lse_n) * (params.gamma * alpha_n)
    return loss, d_sp, d_sn


def triplet_loss(anchor_pos_sim: float, anchor_neg_sim: float, margin: float) -> float:
    """Hinge on cosine distance: ``max(0, d(a,p) - d(a,n) + margin)``."""
    return max(0.0, (1.0 - anchor_pos_sim) - (1.0 - anchor_neg_sim) + margin)


def triplet_loss_grad(anchor_pos_sim: float, anchor_neg_sim: float, margin: float) -> tuple[float, float]:
    """(d/d s_p, d/d s_n); zero on the inactive side of the hinge."""
    if triplet_loss(anchor_pos_sim, anchor_neg_sim, margin) > 0.0:
        return -1.0, 1.0
    return 0.0, 0.0


def _true_class_probs(scores: IdClassScores) -> tuple[list, bool]:
    picked, clamped = [], False
    for p, y in zip(scores.probs, scores.labels):
        pt = p[np.arange(len(y)), y]
        if np.any(pt < PROB_FLOOR):
            clamped = True
        picked.append(np.maximum(pt, PROB_FLOOR))
    return picked, clamped


def motip_id_loss(scores: IdClassScores) -> float:
    """Cross-entropy over ID classes averaged over every object of every frame.

    Probabilities below 1e-12 at the true class are clamped; ``scores.clamped``
    is set when that happens.
    """
    picked, clamped = _true_class_probs(scores)
    total = sum(len(p) for p in picked)
    if total == 0:
        raise ValueError("no objects to score")
    if clamped:
        scores.clamped = True
        warnings.warn("true-class probability clamped to 1e-12", RuntimeWarning, stacklevel=2)
    return float(-sum(np.log(p).sum() for p in picked) / total)


def motip_id_loss_grad(scores: IdClassScores) -> list:
    """Gradient of :func:`motip_id_loss` with respect to each probability array."""
    total = sum(len(y) for y in scores.labels)
    grads = []
    for p, y in zip(scores.probs, scores.labels):
        g = np.zeros_like(p)
        rows = np.arange(len(y))
        pt = p[rows, y]
        g[rows, y] = np.where(pt < PROB_FLOOR, 0.0, -1.0 / (np.maximum(pt, PROB_FLOOR) * total))
        grads.append(g)
    return grads


def overall_loss(l_reid: float, l_det: float, w: LossWeights = LossWeights()) -> float:
    return w.lambda_reid * l_reid + w.lambda_det * l_det


def layered_reid_loss(per_layer_pairs, params: CircleLossParams = CircleLossParams()) -> float:
    """Sum of circle losses over decoder layers."""
    return float(sum(circle_loss(p, params)[0] for p in per_layer_pairs))
