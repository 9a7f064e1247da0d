"""Analytic decoder-layer cost: growing query set vs fixed query set.

Costs are multiply-accumulate counts per decoder layer covering self-attention,
visual cross-attention, the two FFN matmuls and two layer norms. All
arithmetic is exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# previously published figures for N=300, M=8400, C=256, d_ff=1024
PUBLISHED = {
    "b": 11_050,
    "discriminant": 122_462_500,
    "sqrt_discriminant": 11_062.83,
    "root": 6.415,
    "threshold": 7,
}
PUBLISHED_INPUTS = {"n_queries": 300, "memory_len": 8400, "channel_dim": 256, "ffn_dim": 1024}


@dataclass(frozen=True)
class DecoderCostConfig:
    n_queries: int
    channel_dim: int
    memory_len: int
    ffn_dim: int
    delta_n: int = 0

    def __post_init__(self):
        if self.n_queries < 0 or self.channel_dim <= 0 or self.memory_len <= 0 or self.ffn_dim <= 0:
            raise ValueError(f"invalid cost config {self}")
        if self.delta_n < 0:
            raise ValueError(f"delta_n must be >= 0, got {self.delta_n}")


def motr_terms(cfg: DecoderCostConfig) -> dict[str, int]:
    nq = cfg.n_queries + cfg.delta_n
    c = cfg.channel_dim
    return {
        "self_attention": nq * nq * c,
        "cross_attention": nq * cfg.memory_len * c,
        "ffn": 2 * nq * c * cfg.ffn_dim,
        "layer_norm": 2 * nq * c,
    }


def fasttracktr_terms(cfg: DecoderCostConfig) -> dict[str, int]:
    n, c = cfg.n_queries, cfg.channel_dim
    return {
        "self_attention": n * (2 * n) * c,
        "cross_attention": n * cfg.memory_len * c,
        "ffn": 2 * n * c * cfg.ffn_dim,
        "layer_norm": 2 * n * c,
    }


def motr_cost(cfg: DecoderCostConfig) -> int:
    """Cost with the query set grown to ``N + delta_n``."""
    return sum(motr_terms(cfg).values())


def fasttracktr_cost(cfg: DecoderCostConfig) -> int:
    """Cost with N queries attending over 2N keys; independent of ``delta_n``."""
    return sum(fasttracktr_terms(cfg).values())


@dataclass(frozen=True)
class Threshold:
    b: int
    c: int
    discriminant: int
    sqrt_discriminant: float
    real_root: float
    integer_threshold: int
    scan_threshold: int | None

    @property
    def agrees(self) -> bool:
        return self.integer_threshold == self.scan_threshold


def scan_threshold(cfg: DecoderCostConfig, scan_max: int | None = None) -> int | None:
    """Smallest ``delta_n`` with growing-query cost above fixed-query cost, by direct evaluation."""
    fixed = fasttracktr_cost(cfg)
    limit = scan_max if scan_max is not None else cfg.n_queries + 1
    for dn in range(limit + 1):
        if motr_cost(DecoderCostConfig(cfg.n_queries, cfg.channel_dim, cfg.memory_len, cfg.ffn_dim, dn)) > fixed:
            return dn
    return None


def delta_n_threshold(cfg: DecoderCostConfig, scan_max: int | None = None) -> Threshold:
    """Solve ``dN^2 + (2N + M + 2 d_ff + 2) dN - N^2 > 0``.

    The integer threshold is the smallest integer strictly above the positive
    root, found exactly with ``isqrt``: ``x > root`` iff ``2x + b > sqrt(D)``.
    It is cross-checked against a direct scan of the cost inequality.
    """
    n = cfg.n_queries
    b = 2 * n + cfg.memory_len + 2 * cfg.ffn_dim + 2
    c = -n * n
    disc = b * b - 4 * c
    s = math.isqrt(disc)
    # smallest integer with 2x + b >= s + 1
    x = max(0, -(-(s + 1 - b) // 2))
    root = (-b + math.sqrt(disc)) / 2
    return Threshold(b, c, disc, math.sqrt(disc), root, x, scan_threshold(cfg, scan_max))


def cost_gap(cfg: DecoderCostConfig) -> int:
    """``motr_cost - fasttracktr_cost``."""
    return motr_cost(cfg) - fasttracktr_cost(cfg)


def sweep(cfg: DecoderCostConfig, delta_ns) -> list[dict]:
    rows = []
    for dn in delta_ns:
        c = DecoderCostConfig(cfg.n_queries, cfg.channel_dim, cfg.memory_len, cfg.ffn_dim, dn)
        o1, o2 = motr_cost(c), fasttracktr_cost(c)
        rows.append({"delta_n": dn, "motr": o1, "fasttracktr": o2, "gap": o1 - o2})
    return rows
