"""Split-gain feature importance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import SmerfForest

__all__ = ["ImportanceVector", "feature_importance"]


@dataclass(frozen=True)
class ImportanceVector:
    raw: np.ndarray
    normalized: np.ndarray


def feature_importance(forest: SmerfForest) -> ImportanceVector:
    """Sum of realized split gains per feature across the forest.

    A sparse projection credits its full gain to every feature it uses.
    ``normalized`` divides by the largest entry (all zeros if nothing split).
    """
    raw = np.zeros(forest.n_features)
    for tree in forest.trees:
        for node in tree.split_nodes():
            s, e = tree.proj_ptr[node], tree.proj_ptr[node + 1]
            feats = tree.proj_feat[s:e][tree.proj_weight[s:e] != 0]
            raw[feats] += tree.gain[node]
    top = raw.max()
    normalized = raw / top if top > 0 else np.zeros_like(raw)
    return ImportanceVector(raw, normalized)
