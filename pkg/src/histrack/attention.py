"""Historical-query attention blocks.

Three forward passes live here:

* the historical-cross decoder layer, whose self-attention keys/values are the
  current queries concatenated with the previous frame's encoded queries;
* the masked historical encoder that fuses the previous and current decoder
  outputs;
* the trajectory attention of the ID decoder layer.

All query counts are fixed: every block maps N queries to N queries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .tensor_math import (
    LinearLayer,
    ShapeError,
    as_matrix,
    layer_norm,
    linear_forward,
    relu,
    scaled_dot_attention,
)


class QueryRole(str, enum.Enum):
    INITIAL = "initial"
    DECODER_OUTPUT = "decoder_output"
    ENCODER_FUSED = "encoder_fused"


class PosMode(str, enum.Enum):
    NONE = "none"
    MLP = "mlp"
    DECODER_POS = "decoder_pos"


@dataclass(frozen=True)
class QuerySet:
    queries: np.ndarray
    frame_index: int
    role: QueryRole = QueryRole.INITIAL

    def __post_init__(self):
        q = as_matrix(self.queries, "queries")
        if q.shape[0] == 0 or q.shape[1] == 0:
            raise ShapeError(f"query set must be non-empty, got shape {q.shape}")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "role", QueryRole(self.role))

    @property
    def n(self) -> int:
        return self.queries.shape[0]

    @property
    def c(self) -> int:
        return self.queries.shape[1]


@dataclass(frozen=True)
class HistoricalMask:
    kept: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kept", np.asarray(self.kept, dtype=bool).reshape(-1))

    def __len__(self) -> int:
        return self.kept.shape[0]


@dataclass(frozen=True)
class NormParams:
    gain: np.ndarray
    shift: np.ndarray

    @classmethod
    def default(cls, dim: int) -> "NormParams":
        return cls(np.ones(dim), np.zeros(dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return layer_norm(x, self.gain, self.shift)


@dataclass(frozen=True)
class DecoderLayerParams:
    q_proj: LinearLayer
    k_proj: LinearLayer
    v_proj: LinearLayer
    attn_out: LinearLayer
    visual_q: LinearLayer
    visual_k: LinearLayer
    visual_v: LinearLayer
    visual_out: LinearLayer
    ffn_in: LinearLayer
    ffn_out: LinearLayer
    norm1: NormParams
    norm2: NormParams
    norm3: NormParams

    @property
    def dim(self) -> int:
        return self.q_proj.out_dim

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, ffn_dim: int | None = None) -> "DecoderLayerParams":
        """Xavier-uniform initialization; ``ffn_dim`` defaults to ``4 * dim``."""
        ffn_dim = 4 * dim if ffn_dim is None else ffn_dim
        sq = lambda: LinearLayer.xavier(rng, dim, dim)  # noqa: E731
        return cls(
            q_proj=sq(), k_proj=sq(), v_proj=sq(), attn_out=sq(),
            visual_q=sq(), visual_k=sq(), visual_v=sq(), visual_out=sq(),
            ffn_in=LinearLayer.xavier(rng, dim, ffn_dim),
            ffn_out=LinearLayer.xavier(rng, ffn_dim, dim),
            norm1=NormParams.default(dim), norm2=NormParams.default(dim), norm3=NormParams.default(dim),
        )


@dataclass(frozen=True)
class EncoderParams:
    qk_proj: LinearLayer
    v_proj: LinearLayer
    fuse_out: LinearLayer
    norm: NormParams
    q_pos_mode: PosMode = PosMode.DECODER_POS
    # only used when q_pos_mode is MLP
    pos_mlp_in: LinearLayer | None = None
    pos_mlp_out: LinearLayer | None = None

    @property
    def dim(self) -> int:
        return self.qk_proj.out_dim

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, q_pos_mode: PosMode | str = PosMode.DECODER_POS) -> "EncoderParams":
        return cls(
            qk_proj=LinearLayer.xavier(rng, dim, dim),
            v_proj=LinearLayer.xavier(rng, dim, dim),
            fuse_out=LinearLayer.xavier(rng, dim, dim),
            norm=NormParams.default(dim),
            q_pos_mode=PosMode(q_pos_mode),
            pos_mlp_in=LinearLayer.xavier(rng, dim, dim),
            pos_mlp_out=LinearLayer.xavier(rng, dim, dim),
        )


def _check_pair(a: QuerySet, b: QuerySet) -> None:
    if a.queries.shape != b.queries.shape:
        raise ShapeError(
            f"query sets must share N x C: {a.queries.shape} vs {b.queries.shape}"
        )


def _ffn(params: DecoderLayerParams, x: np.ndarray) -> np.ndarray:
    return linear_forward(params.ffn_out, relu(linear_forward(params.ffn_in, x)))


def _canonical_order(x: np.ndarray) -> np.ndarray:
    """Row permutation sorting ``x`` lexicographically."""
    return np.lexsort(x.T[::-1])


def _cross_core(cur: np.ndarray, prev: np.ndarray, params: DecoderLayerParams):
    q = linear_forward(params.q_proj, cur)
    both = np.vstack([cur, prev])
    k = linear_forward(params.k_proj, both)
    v = linear_forward(params.v_proj, both)
    attended, weights = scaled_dot_attention(q, k, v)
    out = params.norm1(cur + linear_forward(params.attn_out, attended))
    return attended, weights, out


def _historical_cross(q_d_t: QuerySet, q_prev_enc: QuerySet, params: DecoderLayerParams):
    # Current queries are processed in a canonical row order and un-permuted
    # afterwards, so a permutation of the input rows permutes the output rows
    # bit for bit (the keys include the current queries, and summation order
    # would otherwise leak into the last bits).
    _check_pair(q_d_t, q_prev_enc)
    n = q_d_t.n
    order = _canonical_order(q_d_t.queries)
    inv = np.argsort(order)
    attended, weights, out = _cross_core(q_d_t.queries[order], q_prev_enc.queries, params)
    weights = weights[inv]
    w = np.empty_like(weights)
    w[:, order] = weights[:, :n]
    w[:, n:] = weights[:, n:]
    return attended[inv], w, out[inv]


def historical_cross_weights(q_d_t: QuerySet, q_prev_enc: QuerySet, params: DecoderLayerParams):
    """Return ``(attended, weights)`` before the output projection.

    ``weights`` is N x 2N: each current query attends over the current queries
    followed by the previous frame's encoded queries.
    """
    attended, weights, _ = _historical_cross(q_d_t, q_prev_enc, params)
    return attended, weights


def historical_cross_attention(q_d_t: QuerySet, q_prev_enc: QuerySet, params: DecoderLayerParams) -> QuerySet:
    if q_prev_enc.role is QueryRole.INITIAL:
        raise ValueError("previous-frame queries must be decoder or encoder outputs")
    _, _, out = _historical_cross(q_d_t, q_prev_enc, params)
    return QuerySet(out, q_d_t.frame_index, QueryRole.DECODER_OUTPUT)


def visual_cross_attention(x: np.ndarray, visual_memory, params: DecoderLayerParams) -> np.ndarray:
    """Attention of queries over the visual memory, after ``visual_out``."""
    mem = as_matrix(visual_memory, "visual_memory")
    if mem.shape[1] != x.shape[1]:
        raise ShapeError(f"visual memory has {mem.shape[1]} channels, queries have {x.shape[1]}")
    attended, _ = scaled_dot_attention(
        linear_forward(params.visual_q, x),
        linear_forward(params.visual_k, mem),
        linear_forward(params.visual_v, mem),
    )
    return linear_forward(params.visual_out, attended)


def decoder_layer_forward(q_in: QuerySet, q_prev_enc: QuerySet, visual_memory, params: DecoderLayerParams) -> QuerySet:
    h = historical_cross_attention(q_in, q_prev_enc, params).queries
    h = params.norm2(h + visual_cross_attention(h, visual_memory, params))
    h = params.norm3(h + _ffn(params, h))
    return QuerySet(h, q_in.frame_index, QueryRole.DECODER_OUTPUT)


def decoder_forward(q_d_t: QuerySet, q_prev_enc: QuerySet, visual_memory, layers: list[DecoderLayerParams]) -> QuerySet:
    """Run a stack of decoder layers against the same history and memory."""
    q = q_d_t
    for params in layers:
        q = decoder_layer_forward(q, q_prev_enc, visual_memory, params)
    return q


def encoder_query_pos(params: EncoderParams, q_f_prev: QuerySet, decoder_pos=None) -> np.ndarray:
    """Positional term added to the historical queries, per ``q_pos_mode``."""
    mode = params.q_pos_mode
    if mode is PosMode.NONE:
        return np.zeros_like(q_f_prev.queries)
    if mode is PosMode.MLP:
        hidden = relu(linear_forward(params.pos_mlp_in, q_f_prev.queries))
        return linear_forward(params.pos_mlp_out, hidden)
    if decoder_pos is None:
        raise ValueError("decoder_pos mode needs the decoder positional matrix")
    pos = as_matrix(decoder_pos, "decoder_pos")
    if pos.shape != q_f_prev.queries.shape:
        raise ShapeError(f"positional matrix {pos.shape} != queries {q_f_prev.queries.shape}")
    return pos


def historical_encoder_weights(q_f_prev: QuerySet, q_f_t: QuerySet, mask: HistoricalMask, params: EncoderParams, q_pos):
    """Masked attention of the fused history; returns ``(attended, weights)``.

    Rows whose history is masked out take the current frame's query as their
    history input, so the result never reads ``q_f_prev`` at masked rows.
    Masked positions are also excluded as keys/values.
    """
    _check_pair(q_f_prev, q_f_t)
    if len(mask) != q_f_t.n:
        raise ShapeError(f"mask length {len(mask)} != N={q_f_t.n}")
    q_pos = as_matrix(q_pos, "q_pos")
    if q_pos.shape != q_f_t.queries.shape:
        raise ShapeError(f"q_pos shape {q_pos.shape} != queries {q_f_t.queries.shape}")
    kept = mask.kept
    history = np.where(kept[:, None], q_f_prev.queries, q_f_t.queries)
    qk = linear_forward(params.qk_proj, history + q_pos)
    v = linear_forward(params.v_proj, q_f_t.queries)
    if not kept.any():
        return v, None
    return scaled_dot_attention(qk, qk, v, key_mask=kept)


def historical_encoder_forward(q_f_prev: QuerySet, q_f_t: QuerySet, mask: HistoricalMask, params: EncoderParams, q_pos) -> QuerySet:
    # with every row masked the attention is bypassed and the projected
    # current queries go straight to fuse_out
    attended, _ = historical_encoder_weights(q_f_prev, q_f_t, mask, params, q_pos)
    out = params.norm(q_f_t.queries + linear_forward(params.fuse_out, attended))
    return QuerySet(out, q_f_t.frame_index, QueryRole.ENCODER_FUSED)


def flip_probabilities(n_gt: int, n_q: int) -> tuple[float, float]:
    """``(p_kept_to_dropped, p_dropped_to_kept)`` for training masks."""
    if n_q <= 0:
        raise ValueError(f"n_q must be positive, got {n_q}")
    if n_gt < 0 or n_gt > n_q:
        raise ValueError(f"need 0 <= n_gt <= n_q, got n_gt={n_gt}, n_q={n_q}")
    ratio = n_gt / n_q
    return min(0.5, 2.0 * ratio), min(max(0.1, ratio), 0.2)


def make_training_mask(matched, n_gt: int, n_q: int, rng: np.random.Generator) -> HistoricalMask:
    matched = np.asarray(matched, dtype=bool).reshape(-1)
    if matched.shape[0] != n_q:
        raise ValueError(f"matched has length {matched.shape[0]}, expected n_q={n_q}")
    p_keep_flip, p_drop_flip = flip_probabilities(n_gt, n_q)
    u = rng.random(n_q)
    flip = np.where(matched, u < p_keep_flip, u < p_drop_flip)
    return HistoricalMask(matched ^ flip)


def make_inference_mask(confidences, threshold: float) -> HistoricalMask:
    conf = np.asarray(confidences, dtype=np.float64).reshape(-1)
    return HistoricalMask(conf >= threshold)


def id_trajectory_weights(emb_t, emb_h) -> tuple[np.ndarray, np.ndarray]:
    emb_t = as_matrix(emb_t, "emb_t")
    emb_h = as_matrix(emb_h, "emb_h")
    if emb_t.shape[1] != emb_h.shape[1]:
        raise ShapeError(f"emb_t has {emb_t.shape[1]} channels, emb_h has {emb_h.shape[1]}")
    return scaled_dot_attention(emb_t, emb_h, emb_h)


def id_trajectory_attention(emb_t, emb_h, params: DecoderLayerParams) -> np.ndarray:
    """Trajectory attention of the ID decoder layer followed by its fuse block.

    The fuse block is ``attn_out`` then a residual FFN and ``norm3``; it acts
    row-wise, so identical attended rows give identical outputs.
    """
    attended, _ = id_trajectory_weights(emb_t, emb_h)
    fused = linear_forward(params.attn_out, attended)
    return params.norm3(fused + _ffn(params, fused))


def with_role(qs: QuerySet, role: QueryRole) -> QuerySet:
    return replace(qs, role=role)
