"""Growing and querying a single randomized SMERF tree.

A tree is stored as flat arrays in preorder (sklearn ``tree_`` style):
``left[i] == -1`` marks a leaf. Split ``i`` sends ``x`` left iff
``sum_t w_t * x[f_t] <= threshold[i]`` over the projection terms stored in
``proj_feat[proj_ptr[i]:proj_ptr[i + 1]]``. Leaves keep the bag entries
(original row indices, repeated for bootstrap duplicates) that landed in
them; that is all that is needed to evaluate leaf-to-leaf distances.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, NamedTuple, Optional, Union

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .core import (
    AXIS,
    BOOTSTRAP,
    DimensionMismatch,
    Hyperparams,
    SparseProjection,
    SplitParams,
    UnknownLeaf,
)
from .impurity import _first_best, _project_one, smerf_node_scan

__all__ = [
    "SmerfTree",
    "Split",
    "Leaf",
    "sample_projections",
    "grow_tree",
    "leaf_of",
    "tree_leaf_distance",
    "tree_predict",
]


class Split(NamedTuple):
    params: SplitParams
    left: int
    right: int
    gain: float


class Leaf(NamedTuple):
    leaf_id: int
    indices: np.ndarray


@dataclass(eq=False)
class SmerfTree:
    left: np.ndarray
    right: np.ndarray
    threshold: np.ndarray
    gain: np.ndarray
    proj_ptr: np.ndarray
    proj_feat: np.ndarray
    proj_weight: np.ndarray
    node_leaf: np.ndarray
    leaf_ptr: np.ndarray
    leaf_members: np.ndarray
    bag: np.ndarray
    depth: int
    n_features: int
    mode: str = AXIS
    _memo: dict = field(default_factory=dict, repr=False)
    _memo_owner: list = field(default_factory=lambda: [None], repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.left.size

    @property
    def n_leaves(self) -> int:
        return self.leaf_ptr.size - 1

    def leaf_indices(self, a: int) -> np.ndarray:
        if not 0 <= a < self.n_leaves:
            raise UnknownLeaf(f"leaf {a} not in tree with {self.n_leaves} leaves")
        return self.leaf_members[self.leaf_ptr[a]:self.leaf_ptr[a + 1]]

    def projection(self, node: int) -> SparseProjection:
        s, e = self.proj_ptr[node], self.proj_ptr[node + 1]
        terms = tuple((int(f), int(w)) for f, w in zip(self.proj_feat[s:e], self.proj_weight[s:e]))
        return SparseProjection(terms, self.mode)

    def node(self, i: int) -> Union[Split, Leaf]:
        if self.left[i] < 0:
            a = int(self.node_leaf[i])
            return Leaf(a, self.leaf_indices(a))
        params = SplitParams(self.projection(i), float(self.threshold[i]))
        return Split(params, int(self.left[i]), int(self.right[i]), float(self.gain[i]))

    def split_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.left >= 0)

    def apply(self, X) -> np.ndarray:
        """Leaf id for every row of ``X``."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return _route(X, self.left, self.right, self.threshold, self.proj_ptr,
                      self.proj_feat, self.proj_weight, self.node_leaf)

    def leaf_distances(self, Z: np.ndarray, leaves) -> np.ndarray:
        """Matrix of leaf-to-leaf distances among ``leaves`` (exactly symmetric)."""
        leaves = np.asarray(leaves, dtype=np.int64)
        sizes = np.diff(self.leaf_ptr)[leaves]
        cols = np.concatenate([self.leaf_indices(a) for a in leaves])
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        block = Z[np.ix_(cols, cols)]
        H = np.add.reduceat(np.add.reduceat(block, offsets, axis=0), offsets, axis=1)
        H /= np.outer(sizes, sizes)
        return np.triu(H) + np.triu(H, 1).T


@njit(cache=True, nogil=True)
def _route(X, left, right, thr, ptr, feats, weights, node_leaf):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            s = 0.0
            for t in range(ptr[node], ptr[node + 1]):
                s += weights[t] * X[r, feats[t]]
            node = left[node] if s <= thr[node] else right[node]
        out[r] = node_leaf[node]
    return out


# ---------------------------------------------------------------------------
# randomization
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _binary_rate(p: int, lam: float) -> float:
    """Per-feature inclusion rate q with E[Binomial(p, q) | >= 1] = lam."""
    if lam >= p:
        return 1.0
    if lam <= 1.0 + 1e-12:
        return 0.0

    def excess(q):
        return p * q / -np.expm1(p * np.log1p(-q)) - lam

    return brentq(excess, 1e-12, 1.0 - 1e-12, xtol=1e-15)


def _draw_projections(p: int, d: int, hp: Hyperparams, rng: np.random.Generator):
    if hp.projection == AXIS:
        # draw order is the candidate order used for tie-breaking
        feats = rng.choice(p, size=d, replace=False).astype(np.int64)
        return np.arange(d + 1, dtype=np.int64), feats, np.ones(d)
    q = _binary_rate(p, float(hp.lam))
    if q == 0.0:
        counts = np.ones(d, dtype=np.int64)
    elif q == 1.0:
        counts = np.full(d, p, dtype=np.int64)
    else:
        counts = rng.binomial(p, q, size=d)
        while (zero := counts == 0).any():
            counts[zero] = rng.binomial(p, q, size=int(zero.sum()))
    # projection k keeps the counts[k] features with the smallest uniforms,
    # listed in increasing feature order
    order = np.argsort(rng.random((d, p)), axis=1)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(p)[None, :], axis=1)
    feats = np.nonzero(ranks < counts[:, None])[1].astype(np.int64)
    weights = (2 * rng.integers(0, 2, size=feats.size) - 1).astype(np.float64)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return ptr, feats, weights


def sample_projections(p: int, hp: Hyperparams, rng: np.random.Generator) -> List[SparseProjection]:
    """Draw the candidate projections for one split node."""
    d = hp.resolve_d(p)
    ptr, feats, weights = _draw_projections(p, d, hp, rng)
    return [
        SparseProjection(
            tuple((int(f), int(w)) for f, w in zip(feats[ptr[k]:ptr[k + 1]], weights[ptr[k]:ptr[k + 1]])),
            hp.projection,
        )
        for k in range(d)
    ]


def draw_bag(n: int, hp: Hyperparams, rng: np.random.Generator) -> np.ndarray:
    if hp.sampling == BOOTSTRAP:
        return np.sort(rng.integers(0, n, size=n)).astype(np.int64)
    return np.sort(rng.choice(n, size=hp.bag_size(n), replace=False)).astype(np.int64)


# ---------------------------------------------------------------------------
# growth
# ---------------------------------------------------------------------------

NodeScan = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], tuple]


def grow_with_scan(X: np.ndarray, n: int, hp: Hyperparams, rng: np.random.Generator,
                   scan: NodeScan) -> SmerfTree:
    """Shared recursive partitioning driver.

    ``scan(idx, ptr, feats, weights)`` returns per-projection
    ``(threshold, gain, left_count, tol)`` arrays for the node sample ``idx``.
    Every grower (pairwise, Gini, variance) goes through here, so they
    consume the random stream identically and stop under the same rules.
    """
    p = X.shape[1]
    d = hp.resolve_d(p)
    bag = draw_bag(n, hp, rng)

    left: List[int] = []
    right: List[int] = []
    thresholds: List[float] = []
    gains: List[float] = []
    proj_ptr: List[int] = [0]
    proj_feat: List[np.ndarray] = []
    proj_weight: List[np.ndarray] = []
    node_leaf: List[int] = []
    leaves: List[np.ndarray] = []
    max_depth = 0

    stack = [(bag, 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(left)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        max_depth = max(max_depth, depth)
        left.append(-1)
        right.append(-1)

        chosen = None
        if idx.size >= hp.min_parent and (hp.max_depth is None or depth < hp.max_depth):
            ptr, feats, weights = _draw_projections(p, d, hp, rng)
            thr, gain, nleft, tol = scan(idx, ptr, feats, weights)
            k = _first_best(gain, nleft > 0, tol)
            if k >= 0 and gain[k] > tol:
                f = feats[ptr[k]:ptr[k + 1]]
                w = weights[ptr[k]:ptr[k + 1]]
                go_left = _project_one(X, idx, f, w) <= thr[k]
                chosen = (thr[k], gain[k], f, w, go_left)

        if chosen is None:
            thresholds.append(np.nan)
            gains.append(0.0)
            proj_ptr.append(proj_ptr[-1])
            node_leaf.append(len(leaves))
            leaves.append(idx)
            continue

        thr_k, gain_k, f, w, go_left = chosen
        thresholds.append(float(thr_k))
        gains.append(float(gain_k))
        proj_feat.append(f)
        proj_weight.append(w)
        proj_ptr.append(proj_ptr[-1] + f.size)
        node_leaf.append(-1)
        stack.append((idx[~go_left], depth + 1, node, False))
        stack.append((idx[go_left], depth + 1, node, True))

    sizes = [a.size for a in leaves]
    return SmerfTree(
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        threshold=np.asarray(thresholds, dtype=np.float64),
        gain=np.asarray(gains, dtype=np.float64),
        proj_ptr=np.asarray(proj_ptr, dtype=np.int64),
        proj_feat=np.concatenate(proj_feat).astype(np.int64) if proj_feat else np.zeros(0, np.int64),
        proj_weight=np.concatenate(proj_weight).astype(np.float64) if proj_weight else np.zeros(0),
        node_leaf=np.asarray(node_leaf, dtype=np.int64),
        leaf_ptr=np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
        leaf_members=np.concatenate(leaves).astype(np.int64),
        bag=bag,
        depth=max_depth,
        n_features=p,
        mode=hp.projection,
    )


def grow_tree(X, Z, hp: Hyperparams, rng: np.random.Generator) -> SmerfTree:
    """Grow one tree by maximizing the pairwise-distance split gain."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if Z.shape != (X.shape[0], X.shape[0]):
        raise DimensionMismatch(f"X has {X.shape[0]} rows but Z is {Z.shape}")

    def scan(idx, ptr, feats, weights):
        return smerf_node_scan(Z, X, idx, ptr, feats, weights)

    return grow_with_scan(X, X.shape[0], hp, rng, scan)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def leaf_of(tree: SmerfTree, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != tree.n_features:
        raise DimensionMismatch(f"expected a vector of {tree.n_features} features")
    return int(tree.apply(x[None, :])[0])


def tree_leaf_distance(tree: SmerfTree, Z, a: int, b: int) -> float:
    """Cross-average of ``z_ij`` between the bag entries of leaves ``a`` and ``b``.

    Results are memoized per tree, keyed by the unordered leaf pair. The memo
    is dropped if a different ``Z`` object is passed in.
    """
    key = (a, b) if a <= b else (b, a)
    memo = tree._memo
    if tree._memo_owner[0] is not Z:
        with tree._lock:
            if tree._memo_owner[0] is not Z:
                memo.clear()
                tree._memo_owner[0] = Z
    hit = memo.get(key)
    if hit is not None:
        return hit
    sa, sb = tree.leaf_indices(key[0]), tree.leaf_indices(key[1])
    value = float(np.asarray(Z)[np.ix_(sa, sb)].sum() / (sa.size * sb.size))
    memo[key] = value
    return value


def tree_predict(tree: SmerfTree, Z, x, x_prime) -> float:
    return tree_leaf_distance(tree, Z, leaf_of(tree, x), leaf_of(tree, x_prime))
