"""Semi-supervised learning on pre-extracted embedding matrices.

Trains classifier heads on frozen features, ensembles their pseudo-labels
over the unlabeled split, self-trains a final head on the soft labels, and
selects hyperparameters without labels via seven criteria aggregated by
average rank.
"""

from ._backend import backend_name
from .data import DatasetSplit, EmbeddingSet, SplitSpec, make_split
from .emb_io import read_embedding_file, write_embedding_file
from .ensemble import (
    PseudoLabelSet,
    ThresholdPolicy,
    ensemble_mean_labels,
    ensemble_mean_logits,
    ensemble_mean_probs,
    entropy_profile,
    pseudo_label,
    pseudo_label_accuracy,
)
from .heads import (
    HeadConfig,
    HeadModel,
    ModelOutputs,
    TrainTargets,
    forward,
    loss_gradient,
    softmax,
    train_head,
)
from .validators import (
    ScorePanel,
    ValidatorScore,
    ami,
    ari,
    bnm,
    build_panel,
    chi,
    fmi,
    kmeans,
    rankme,
    score_model,
    select_config,
    v_measure,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit", "EmbeddingSet", "SplitSpec", "make_split",
    "read_embedding_file", "write_embedding_file",
    "PseudoLabelSet", "ThresholdPolicy", "ensemble_mean_labels",
    "ensemble_mean_logits", "ensemble_mean_probs", "entropy_profile",
    "pseudo_label", "pseudo_label_accuracy",
    "HeadConfig", "HeadModel", "ModelOutputs", "TrainTargets",
    "forward", "loss_gradient", "softmax", "train_head",
    "ScorePanel", "ValidatorScore", "ami", "ari", "bnm", "build_panel",
    "chi", "fmi", "kmeans", "rankme", "score_model", "select_config",
    "v_measure",
    "backend_name",
]
