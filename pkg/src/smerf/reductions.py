"""Distances built from labels or responses, and reference CART growers.

``indicator_distance`` turns class labels into a 0/1 distance and
``squared_half_distance`` turns responses into ``(y_i - y_j)^2 / 2``. With
these, a SMERF tree reproduces the Gini classification tree and the
variance regression tree respectively. The reference growers here build
those CART trees directly from labels/responses through the same driver
and the same random stream, which makes the equivalence checkable node by
node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import Hyperparams, ShapeMismatch
from .impurity import gini_node_scan, variance_node_scan
from .tree import SmerfTree, grow_with_scan

__all__ = [
    "LabeledData",
    "indicator_distance",
    "squared_half_distance",
    "absolute_distance",
    "grow_reference_tree",
    "regression_tree_predict",
    "TreeComparison",
    "assert_tree_equivalence",
]


@dataclass(frozen=True)
class LabeledData:
    labels: Optional[np.ndarray] = None
    responses: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.labels is None) == (self.responses is None):
            raise ValueError("give exactly one of labels or responses")

    @property
    def n(self) -> int:
        return len(self.labels if self.labels is not None else self.responses)


def indicator_distance(labels) -> np.ndarray:
    c = np.asarray(labels)
    return (c[:, None] != c[None, :]).astype(np.float64)


def squared_half_distance(responses) -> np.ndarray:
    y = np.asarray(responses, dtype=np.float64)
    return 0.5 * (y[:, None] - y[None, :]) ** 2


def absolute_distance(responses) -> np.ndarray:
    y = np.asarray(responses, dtype=np.float64)
    return np.abs(y[:, None] - y[None, :])


def grow_reference_tree(X, labeled: LabeledData, hp: Hyperparams,
                        rng: np.random.Generator) -> SmerfTree:
    """Gini tree (labels) or variance tree (responses) with SMERF conventions."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if labeled.n != X.shape[0]:
        raise ShapeMismatch(f"{labeled.n} targets for {X.shape[0]} rows")
    if labeled.labels is not None:
        _, codes = np.unique(np.asarray(labeled.labels), return_inverse=True)
        codes = codes.astype(np.int64)
        k = int(codes.max()) + 1

        def scan(idx, ptr, feats, weights):
            return gini_node_scan(X, idx, codes, k, ptr, feats, weights)
    else:
        y = np.ascontiguousarray(labeled.responses, dtype=np.float64)

        def scan(idx, ptr, feats, weights):
            return variance_node_scan(X, idx, y, ptr, feats, weights)

    return grow_with_scan(X, X.shape[0], hp, rng, scan)


def leaf_response_means(tree: SmerfTree, responses) -> np.ndarray:
    y = np.asarray(responses, dtype=np.float64)
    sizes = np.diff(tree.leaf_ptr)
    sums = np.add.reduceat(y[tree.leaf_members], tree.leaf_ptr[:-1])
    return sums / sizes


def regression_tree_predict(tree: SmerfTree, responses, X) -> np.ndarray:
    """Regression-tree output: mean training response of each row's leaf."""
    return leaf_response_means(tree, responses)[tree.apply(X)]


class TreeComparison(NamedTuple):
    equal: bool
    report: str

    def __bool__(self):
        return self.equal


def assert_tree_equivalence(t1: SmerfTree, t2: SmerfTree, atol: float = 1e-12) -> TreeComparison:
    """Compare topology, split projections, thresholds and leaf index sets.

    Returns a falsy ``TreeComparison`` whose report names the first node
    (as a root-to-node path of L/R moves) where the trees diverge.
    """
    stack = [(0, 0, "root")]
    while stack:
        a, b, path = stack.pop()
        la, lb = t1.left[a] < 0, t2.left[b] < 0
        if la != lb:
            kind = lambda leaf: "leaf" if leaf else "split"
            return TreeComparison(False, f"{path}: {kind(la)} vs {kind(lb)}")
        if la:
            sa = np.sort(t1.leaf_indices(int(t1.node_leaf[a])))
            sb = np.sort(t2.leaf_indices(int(t2.node_leaf[b])))
            if not np.array_equal(sa, sb):
                return TreeComparison(False, f"{path}: leaf sets differ ({sa.size} vs {sb.size} entries)")
            continue
        pa, pb = t1.projection(a), t2.projection(b)
        if pa.terms != pb.terms:
            return TreeComparison(False, f"{path}: projection {pa.terms} vs {pb.terms}")
        ta, tb = t1.threshold[a], t2.threshold[b]
        if abs(ta - tb) > atol * max(1.0, abs(ta), abs(tb)):
            return TreeComparison(False, f"{path}: threshold {ta!r} vs {tb!r}")
        stack.append((int(t1.right[a]), int(t2.right[b]), path + "/R"))
        stack.append((int(t1.left[a]), int(t2.left[b]), path + "/L"))
    return TreeComparison(True, "identical")
