from .assignment import Assignment, CostMatrix, hungarian_assign
from .geometry import giou, iou, iou_matrix, tlwh_to_xyah, xyah_to_tlwh
from .kalman import (
    Detection,
    Tracklet,
    TrackStatus,
    kf_initiate,
    kf_predict,
    kf_project,
    kf_update,
    mahalanobis_sq,
)
from .tracker import (
    AssociationConfig,
    OutputRecord,
    SequenceError,
    Tracker,
    build_fused_cost,
    build_motion_cost,
    ema_update,
)

__all__ = [
    "Assignment", "AssociationConfig", "CostMatrix", "Detection", "OutputRecord",
    "SequenceError", "TrackStatus", "Tracker", "Tracklet", "build_fused_cost",
    "build_motion_cost", "ema_update", "giou", "hungarian_assign", "iou", "iou_matrix",
    "kf_initiate", "kf_predict", "kf_project", "kf_update", "mahalanobis_sq",
    "tlwh_to_xyah", "xyah_to_tlwh",
]
