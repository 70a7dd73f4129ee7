"""Unsupervised segmentation with a dynamically weighted clustering loss.

Thin re-export of the compiled core. The heavy lifting (per-image training,
losses, silhouette gate, evaluation) lives in C++; this package adds nothing
but the import surface.
"""

from ._core import (
    BackboneKind,
    CNN_DEFAULT_PARAMS,
    LossReduction,
    RESNET_FPN_DEFAULT_PARAMS,
    RESNET_FPN_PUBLISHED_PARAMS,
    RunConfig,
    ScheduleKind,
    SilhouetteConfig,
    StopMode,
    TrainMode,
    argmax_labels,
    combined_loss,
    compute_mu,
    confusion,
    feature_similarity_loss,
    hungarian_assign,
    miou,
    normalize_response,
    param_count,
    segment,
    select_opt_nC,
    silhouette_score,
    spatial_continuity_loss,
    synthetic_corpus,
)

__all__ = [
    "BackboneKind",
    "CNN_DEFAULT_PARAMS",
    "LossReduction",
    "RESNET_FPN_DEFAULT_PARAMS",
    "RESNET_FPN_PUBLISHED_PARAMS",
    "RunConfig",
    "ScheduleKind",
    "SilhouetteConfig",
    "StopMode",
    "TrainMode",
    "argmax_labels",
    "combined_loss",
    "compute_mu",
    "confusion",
    "feature_similarity_loss",
    "hungarian_assign",
    "miou",
    "normalize_response",
    "param_count",
    "segment",
    "select_opt_nC",
    "silhouette_score",
    "spatial_continuity_loss",
    "synthetic_corpus",
]
