"""Weakly supervised contrastive learning at desk scale.

Weak labels come from connected components of per-batch 1-NN graphs; the
union-find labeling runs in a compiled kernel when available
(``wcl.CCL_BACKEND`` reports which one was loaded).
"""
from ._kernels import BACKEND as CCL_BACKEND
from .losses import LossParts, LossReport, LossWeights, nce_loss, overall_loss, sup_con_loss, swap_loss
from .trainer import TrainConfig, evaluate, train
from .weakgraph import (
    build_one_nn_adjacency,
    component_stats,
    connected_components,
    weak_labels,
    weak_labels_from_embeddings,
)

__version__ = "0.1.0"
