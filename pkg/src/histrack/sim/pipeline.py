"""Per-frame driver: optional historical attention over detection embeddings,
then association, then scoring against ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..association import AssociationConfig, Detection, Tracker
from ..attention import (
    DecoderLayerParams,
    EncoderParams,
    PosMode,
    QueryRole,
    QuerySet,
    decoder_forward,
    encoder_query_pos,
    historical_encoder_forward,
    make_inference_mask,
    with_role,
)
from ..metrics import MetricReport, evaluate
from ..tensor_math import make_rng
from .motfile import MotRow, rows_to_frames


@dataclass(frozen=True)
class AttentionConfig:
    n_queries: int = 64
    n_layers: int = 6
    visual_len: int = 64
    ffn_mult: int = 4
    mask_threshold: float = 0.5
    q_pos_mode: PosMode = PosMode.DECODER_POS
    # weight of the attention output when blended into each embedding
    blend: float = 0.1
    seed: int = 0


class AttentionStage:
    """Fixed-N historical decoder + encoder applied to each frame's embeddings.

    Detections occupy the first slots of an ``n_queries``-row query set; the
    remaining slots are zero rows with confidence 0, so they are always masked
    out of the history.
    """

    def __init__(self, cfg: AttentionConfig, dim: int):
        self.cfg = cfg
        self.dim = dim
        rng = make_rng(cfg.seed)
        self.layers = [DecoderLayerParams.init(rng, dim, cfg.ffn_mult * dim) for _ in range(cfg.n_layers)]
        self.encoder = EncoderParams.init(rng, dim, cfg.q_pos_mode)
        self.visual_memory = rng.standard_normal((cfg.visual_len, dim))
        self.decoder_pos = 0.1 * rng.standard_normal((cfg.n_queries, dim))
        self.prev_decoded: QuerySet | None = None
        self.prev_encoded: QuerySet | None = None
        self.query_counts: list[int] = []

    def __call__(self, frame: int, dets: list[Detection]) -> list[Detection]:
        n = self.cfg.n_queries
        if len(dets) > n:
            raise ValueError(f"frame {frame} has {len(dets)} detections but only {n} query slots")
        slots = np.zeros((n, self.dim))
        conf = np.zeros(n)
        for i, d in enumerate(dets):
            if d.embedding.shape[0] != self.dim:
                raise ValueError(f"embedding dim {d.embedding.shape[0]} != attention dim {self.dim}")
            slots[i] = d.embedding
            conf[i] = d.confidence
        q_d = QuerySet(slots, frame, QueryRole.INITIAL)
        history = self.prev_encoded if self.prev_encoded is not None else with_role(q_d, QueryRole.DECODER_OUTPUT)
        q_f = decoder_forward(q_d, history, self.visual_memory, self.layers)
        # first frame: the history is the current decoder output itself
        q_prev = self.prev_decoded if self.prev_decoded is not None else q_f
        q_pos = encoder_query_pos(self.encoder, q_prev, self.decoder_pos)
        mask = make_inference_mask(conf, self.cfg.mask_threshold)
        fused = historical_encoder_forward(q_prev, q_f, mask, self.encoder, q_pos)
        for qs in (q_f, fused):
            if qs.n != n:
                raise AssertionError(f"query count changed to {qs.n} (expected {n})")
        self.query_counts.append(fused.n)
        self.prev_decoded, self.prev_encoded = q_f, fused

        out = []
        scale = self.cfg.blend / np.sqrt(self.dim)
        for i, d in enumerate(dets):
            emb = d.embedding + scale * fused.queries[i]
            out.append(Detection(d.box, d.confidence, emb / np.linalg.norm(emb)))
        return out


@dataclass
class PipelineResult:
    rows: list = field(default_factory=list)
    report: MetricReport | None = None
    query_counts: list = field(default_factory=list)
    detection_counts: list = field(default_factory=list)


def run_pipeline(frames, assoc_cfg: AssociationConfig = AssociationConfig(),
                 attn_cfg: AttentionConfig | None = None) -> PipelineResult:
    """Track a stream of :class:`FrameObservations` (or ``(frame, detections)`` pairs).

    Ground truth, when the frames carry it, is scored into ``report``.
    """
    tracker = Tracker(assoc_cfg)
    stage = None
    result = PipelineResult()
    gt = []
    for obs in frames:
        frame, dets = (obs.frame, list(obs.detections)) if hasattr(obs, "frame") else (obs[0], list(obs[1]))
        if attn_cfg is not None and (dets or stage is not None):
            if stage is None:
                stage = AttentionStage(attn_cfg, dets[0].embedding.shape[0])
            refined = stage(frame, dets)
            result.detection_counts.append((len(dets), len(refined)))
            dets = refined
        for rec in tracker.associate_frame(frame, dets):
            result.rows.append(MotRow(rec.frame, rec.track_id, *rec.box, conf=rec.confidence))
        if getattr(obs, "ground_truth", None) is not None:
            gt.append(obs.ground_truth)
    result.rows.sort(key=lambda r: (r.frame, r.id))
    if stage is not None:
        result.query_counts = stage.query_counts
    if gt and any(g.entries for g in gt):
        result.report = evaluate(gt, rows_to_frames(result.rows, [g.frame for g in gt]))
    return result
