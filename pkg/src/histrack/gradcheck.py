"""Finite-difference checks of the analytic loss gradients.

The reference values come from a plain re-evaluation of each loss formula
(scalar loops, frozen weighting factors for circle loss), never from the
vectorized code under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import (
    CircleLossParams,
    IdClassScores,
    SimilarityPairs,
    circle_loss,
    motip_id_loss_grad,
    triplet_loss,
    triplet_loss_grad,
)
from .tensor_math import make_rng

FD_STEP = 1e-6


@dataclass
class GradcheckResult:
    loss: str
    trials: int
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def rel_error(analytic, numeric, floor: float = 1e-12) -> float:
    """``max|a - n| / max(max|a|, max|n|)`` over a whole gradient vector.

    Normalizing by the vector rather than per entry keeps components that are
    many orders of magnitude below the rest (and below the finite-difference
    noise floor) from dominating the error.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), floor)
    return float(np.max(np.abs(a - n)) / scale)


def circle_loss_reference(s_p, s_n, alpha_p, alpha_n, params: CircleLossParams) -> float:
    """Direct evaluation with the weighting factors held fixed."""
    sum_n = sum(math.exp(params.gamma * an * (sn - params.delta_n)) for sn, an in zip(s_n, alpha_n))
    sum_p = sum(math.exp(-params.gamma * ap * (sp - params.delta_p)) for sp, ap in zip(s_p, alpha_p))
    return math.log1p(sum_n * sum_p)


def random_pairs(rng: np.random.Generator, max_k: int = 8, max_l: int = 8) -> SimilarityPairs:
    k = int(rng.integers(1, max_k + 1))
    l = int(rng.integers(1, max_l + 1))
    return SimilarityPairs(rng.uniform(-1.0, 1.0, k), rng.uniform(-1.0, 1.0, l))


def _central(f, x: list[float], i: int, h: float) -> float:
    up, down = list(x), list(x)
    up[i] += h
    down[i] -= h
    return (f(up) - f(down)) / (2 * h)


def check_circle(trials: int = 100, seed: int = 0, tol: float = 1e-5, h: float = FD_STEP,
                 params: CircleLossParams = CircleLossParams()) -> GradcheckResult:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(trials):
        pairs = random_pairs(rng)
        sp, sn = list(pairs.s_p), list(pairs.s_n)
        ap = [max(params.optimum_p - v, 0.0) for v in sp]
        an = [max(v - params.optimum_n, 0.0) for v in sn]
        _, g_p, g_n = circle_loss(pairs, params)
        num_p = [_central(lambda x: circle_loss_reference(x, sn, ap, an, params), sp, i, h) for i in range(len(sp))]
        num_n = [_central(lambda x: circle_loss_reference(sp, x, ap, an, params), sn, j, h) for j in range(len(sn))]
        worst = max(worst, rel_error(np.r_[g_p, g_n], num_p + num_n))
    return GradcheckResult("circle", trials, worst, tol)


def check_triplet(trials: int = 100, seed: int = 0, tol: float = 1e-5, h: float = FD_STEP,
                  margin: float = 0.3) -> GradcheckResult:
    rng = make_rng(seed)
    worst = 0.0
    done = 0
    while done < trials:
        sp, sn = rng.uniform(-1.0, 1.0, 2)
        # the hinge is not differentiable at its kink
        if abs(sn - sp + margin) < 10 * h:
            continue
        f = lambda x: triplet_loss(x[0], x[1], margin)  # noqa: E731
        num = [_central(f, [sp, sn], i, h) for i in range(2)]
        worst = max(worst, rel_error(triplet_loss_grad(sp, sn, margin), num))
        done += 1
    return GradcheckResult("triplet", trials, worst, tol)


def check_motip(trials: int = 100, seed: int = 0, tol: float = 1e-5, h: float = FD_STEP) -> GradcheckResult:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n_frames = int(rng.integers(1, 4))
        n_cls = int(rng.integers(2, 6))
        probs, labels = [], []
        for _ in range(n_frames):
            m = int(rng.integers(1, 4))
            p = rng.dirichlet(np.ones(n_cls), size=m)
            p = np.clip(p, 0.05, None)
            probs.append(p / p.sum(axis=1, keepdims=True))
            labels.append(rng.integers(0, n_cls, size=m))
        total = sum(len(y) for y in labels)
        flat = [float(v) for p in probs for v in p.ravel()]
        shapes = [p.shape for p in probs]

        def ref(x):
            out, pos = 0.0, 0
            for shape, y in zip(shapes, labels):
                rows, cols = shape
                for r in range(rows):
                    out -= math.log(x[pos + r * cols + int(y[r])])
                pos += rows * cols
            return out / total

        grads = motip_id_loss_grad(IdClassScores(probs, labels))
        analytic = [float(v) for g in grads for v in g.ravel()]
        num = [_central(ref, flat, i, h) for i in range(len(flat))]
        worst = max(worst, rel_error(analytic, num))
    return GradcheckResult("motip", trials, worst, tol)


CHECKS = {"circle": check_circle, "triplet": check_triplet, "motip": check_motip}
