from losses.contrastive import (
    AugmentedBatch,
    LossBreakdown,
    global_ss_loss,
    global_sup_loss,
    info_nce,
    local_ss_loss,
    map_map_loss,
    map_map_matrix,
    map_map_similarity,
    pretrain_total,
    vec_map_loss,
    vec_map_matrix,
    vec_map_similarity,
)
from losses.episodic import (
    EpisodeView,
    PrototypeSet,
    ViewedEpisode,
    align,
    classify_query,
    cross_view_loss,
    distance_coefficient,
    distance_scaled_loss,
    meta_test_predict,
    meta_total,
    prototypes,
)

__all__ = [
    "AugmentedBatch",
    "LossBreakdown",
    "global_ss_loss",
    "global_sup_loss",
    "info_nce",
    "local_ss_loss",
    "map_map_loss",
    "map_map_matrix",
    "map_map_similarity",
    "pretrain_total",
    "vec_map_loss",
    "vec_map_matrix",
    "vec_map_similarity",
    "EpisodeView",
    "PrototypeSet",
    "ViewedEpisode",
    "align",
    "classify_query",
    "cross_view_loss",
    "distance_coefficient",
    "distance_scaled_loss",
    "meta_test_predict",
    "meta_total",
    "prototypes",
]
