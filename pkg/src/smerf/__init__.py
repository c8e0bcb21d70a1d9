"""Similarity and metric random forests: learn a pairwise distance function
from features and an observed distance matrix."""

from .core import (
    AXIS,
    BINARY,
    BOOTSTRAP,
    SUBSAMPLE,
    Hyperparams,
    SmerfError,
    SparseProjection,
    SplitParams,
    validate_distance_matrix,
)
from .forest import (
    OobReport,
    SmerfForest,
    make_grid,
    oob_rmse,
    pair_decomposition,
    predict_matrix,
    predict_pair,
    train_forest,
    tree_variance_term,
    tune,
)
from .importance import ImportanceVector, feature_importance
from .io import load_model, save_model
from .metrics import EvalReport, evaluate_distances, evaluate_links
from .tree import SmerfTree, grow_tree

__version__ = "0.1.0"
