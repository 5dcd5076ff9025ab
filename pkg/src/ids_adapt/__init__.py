"""Adapt a pre-trained MLP intrusion detector to constrained edge devices.

Feature ranking and subset search shrink the input, pruning shrinks the
network, and teacher/student fine-tuning adapts it to local traffic while
tracking how much detection of other attacks is forgotten.
"""

__version__ = "0.1.0"

from .catalog import Catalog, CatalogEntry, QueryConstraints
from .data import Dataset, FeatureMask, apply_mask, balance_and_split, load_and_preprocess, synth_generate
from .features import feature_ranking, recursive_elimination, subset_search
from .finetune import Algorithm, FineTuneSpec, StudentKind, build_targets, fine_tune, scenario_sweep
from .kernels import BACKEND
from .mlp import Mlp, TrainConfig, accuracy, forward, init_mlp, memory_estimate, predict, train
from .pruning import prune, prune_connections, prune_neurons

__all__ = [
    "BACKEND",
    "Algorithm",
    "Catalog",
    "CatalogEntry",
    "Dataset",
    "FeatureMask",
    "FineTuneSpec",
    "Mlp",
    "QueryConstraints",
    "StudentKind",
    "TrainConfig",
    "accuracy",
    "apply_mask",
    "balance_and_split",
    "build_targets",
    "feature_ranking",
    "fine_tune",
    "forward",
    "init_mlp",
    "load_and_preprocess",
    "memory_estimate",
    "predict",
    "prune",
    "prune_connections",
    "prune_neurons",
    "recursive_elimination",
    "scenario_sweep",
    "subset_search",
    "synth_generate",
    "train",
]
