"""Tree ensembles: training, pair prediction, out-of-bag error and tuning."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    AXIS,
    DimensionMismatch,
    Hyperparams,
    NoCoveredPairs,
    NotInReductionMode,
    ShapeMismatch,
    as_feature_matrix,
    derive_stream,
)
from .reductions import leaf_response_means
from .tree import SmerfTree, grow_tree, tree_leaf_distance

__all__ = [
    "SmerfForest",
    "OobReport",
    "train_forest",
    "predict_pair",
    "predict_matrix",
    "oob_predictions",
    "oob_rmse",
    "make_grid",
    "tune",
    "pair_decomposition",
    "tree_variance_term",
]


def n_workers(n_jobs: Optional[int] = None) -> int:
    """Worker count: explicit ``n_jobs``, else ``SMERF_THREADS``, else 1."""
    if n_jobs is None:
        n_jobs = int(os.environ.get("SMERF_THREADS", "1") or 1)
    return max(1, int(n_jobs))


def _map_trees(fn, items, n_jobs):
    workers = n_workers(n_jobs)
    if workers == 1:
        return map(fn, items)
    # results come back in submission order, so reductions stay deterministic
    pool = ThreadPoolExecutor(max_workers=workers)
    try:
        return list(pool.map(fn, items))
    finally:
        pool.shutdown()


@dataclass(eq=False)
class SmerfForest:
    trees: List[SmerfTree]
    hp: Hyperparams
    train_Z: np.ndarray
    n_features: int
    responses: Optional[np.ndarray] = None

    @property
    def n_train(self) -> int:
        return self.train_Z.shape[0]

    @property
    def num_trees(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class OobReport:
    rmse: float
    covered_pairs: int
    total_pairs: int


def train_forest(X, Z, hp: Hyperparams, responses=None, n_jobs: Optional[int] = None) -> SmerfForest:
    """Grow ``hp.num_trees`` trees; tree ``b`` uses ``derive_stream(hp.seed, b)``.

    Passing ``responses`` (the ``y`` behind ``Z = (y_i - y_j)^2 / 2``) marks
    the forest as a regression reduction, which enables
    :func:`tree_variance_term`.
    """
    X = as_feature_matrix(X)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != (X.shape[0], X.shape[0]):
        raise ShapeMismatch(f"X has {X.shape[0]} rows but Z has shape {Z.shape}")
    if not Z.flags.c_contiguous:
        Z = np.ascontiguousarray(Z)
    if responses is not None:
        responses = np.asarray(responses, dtype=np.float64)
        if responses.shape != (X.shape[0],):
            raise ShapeMismatch("responses must have one entry per row of X")

    def grow(b):
        return grow_tree(X, Z, hp, derive_stream(hp.seed, b))

    trees = list(_map_trees(grow, range(hp.num_trees), n_jobs))
    return SmerfForest(trees, hp, Z, X.shape[1], responses)


def _check_dims(forest: SmerfForest, X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != forest.n_features:
        raise DimensionMismatch(f"expected {forest.n_features} features, got {X.shape[1]}")
    return X


def predict_pair(forest: SmerfForest, x, x_prime) -> float:
    """Mean over trees of the leaf-to-leaf distance for the pair."""
    X = _check_dims(forest, np.vstack([np.ravel(x), np.ravel(x_prime)]))
    total = 0.0
    for tree in forest.trees:
        a, b = tree.apply(X)
        total += tree_leaf_distance(tree, forest.train_Z, int(a), int(b))
    return total / forest.num_trees


def predict_matrix(forest: SmerfForest, X_test, n_jobs: Optional[int] = None) -> np.ndarray:
    """Predicted distances between all rows of ``X_test`` (one routing pass per tree)."""
    X = _check_dims(forest, X_test)

    def one(tree):
        leaves, inv = np.unique(tree.apply(X), return_inverse=True)
        H = tree.leaf_distances(forest.train_Z, leaves)
        return H[np.ix_(inv, inv)]

    out = np.zeros((X.shape[0], X.shape[0]))
    for G in _map_trees(one, forest.trees, n_jobs):
        out += G
    return out / forest.num_trees


def oob_predictions(forest: SmerfForest, X) -> Tuple[np.ndarray, np.ndarray]:
    """Out-of-bag pair predictions on the training rows.

    Pair ``(i, j)`` is averaged over the trees whose bag misses both ``i``
    and ``j``. Returns ``(pred, counts)``; ``pred`` is NaN where ``counts``
    is zero.
    """
    X = _check_dims(forest, X)
    n = forest.n_train
    if X.shape[0] != n:
        raise ShapeMismatch("X must be the training feature matrix")
    sums = np.zeros((n, n))
    counts = np.zeros((n, n), dtype=np.int64)
    for tree in forest.trees:
        inbag = np.zeros(n, dtype=bool)
        inbag[tree.bag] = True
        oob = np.flatnonzero(~inbag)
        if oob.size == 0:
            continue
        leaves, inv = np.unique(tree.apply(X[oob]), return_inverse=True)
        H = tree.leaf_distances(forest.train_Z, leaves)
        block = np.ix_(oob, oob)
        sums[block] += H[np.ix_(inv, inv)]
        counts[block] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        pred = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return pred, counts


def oob_rmse(forest: SmerfForest, X, Z=None) -> OobReport:
    Z = forest.train_Z if Z is None else np.asarray(Z, dtype=np.float64)
    pred, counts = oob_predictions(forest, X)
    iu = np.triu_indices(forest.n_train, 1)
    covered = counts[iu] > 0
    if not covered.any():
        raise NoCoveredPairs("no pair is out of bag in any tree")
    err = pred[iu][covered] - Z[iu][covered]
    return OobReport(float(np.sqrt(np.mean(err * err))), int(covered.sum()), int(iu[0].size))


def make_grid(p: int, projection: str = AXIS, base: Optional[Hyperparams] = None,
              exponents: Sequence[float] = (0.25, 0.5, 0.75, 1.0, 1.5),
              min_parents: Sequence[int] = (2, 4, 8)) -> List[Hyperparams]:
    """``d in {p^a}`` x ``min_parent`` grid, ``d`` rounded and clipped to [1, p] in axis mode."""
    base = base or Hyperparams()
    grid = []
    for a in exponents:
        d = max(1, int(round(p ** a)))
        if projection == AXIS:
            d = min(d, p)
        for mp in min_parents:
            grid.append(replace(base, d=d, min_parent=mp, projection=projection))
    return grid


def tune(X, Z, grid: Iterable[Hyperparams], seed: Optional[int] = None,
         responses=None, n_jobs: Optional[int] = None, return_forest: bool = False):
    """Pick the grid entry with the lowest out-of-bag RMSE (first wins on ties).

    With ``seed`` given, every entry is trained with that master seed.
    Returns ``(best, reports)`` or ``(best, reports, best_forest)``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    reports: List[OobReport] = []
    seen = {}
    best_i, best_forest = -1, None
    for i, hp in enumerate(grid):
        if seed is not None:
            hp = replace(hp, seed=seed)
            grid[i] = hp
        if hp in seen:
            # identical settings give an identical forest
            reports.append(reports[seen[hp]])
            continue
        seen[hp] = i
        forest = train_forest(X, Z, hp, responses=responses, n_jobs=n_jobs)
        rep = oob_rmse(forest, X, Z)
        reports.append(rep)
        if best_i < 0 or rep.rmse < reports[best_i].rmse:
            best_i, best_forest = i, forest
    if return_forest:
        return grid[best_i], reports, best_forest
    return grid[best_i], reports


def pair_decomposition(forest: SmerfForest, X_test):
    """Per-pair tree statistics of a regression-reduction forest.

    Returns ``(g_mean, delta_mean, delta_var)`` as ``m x m`` arrays: the
    forest distance prediction, the mean over trees of the signed
    difference ``delta_b = m_b(x) - m_b(x')`` of leaf-mean responses, and its
    biased variance over trees.
    """
    if forest.responses is None:
        raise NotInReductionMode("forest was not trained with responses")
    X = _check_dims(forest, X_test)
    m = X.shape[0]
    g_sum = np.zeros((m, m))
    mean = np.zeros((m, m))
    m2 = np.zeros((m, m))
    for b, tree in enumerate(forest.trees, start=1):
        leaves, inv = np.unique(tree.apply(X), return_inverse=True)
        g_sum += tree.leaf_distances(forest.train_Z, leaves)[np.ix_(inv, inv)]
        mb = leaf_response_means(tree, forest.responses)[leaves][inv]
        delta = mb[:, None] - mb[None, :]
        step = delta - mean
        mean += step / b
        m2 += step * (delta - mean)
    return g_sum / forest.num_trees, mean, m2 / forest.num_trees


def tree_variance_term(forest: SmerfForest, X_test) -> float:
    """Average over unordered test pairs of ``Var_b(delta_b) / 2``.

    For fully grown trees this is the part of the forest prediction left
    after removing ``(mean delta)^2 / 2``; it tracks the noise variance.
    """
    if forest.responses is None:
        raise NotInReductionMode("forest was not trained with responses")
    X = _check_dims(forest, X_test)
    m = X.shape[0]
    if m < 2:
        raise ShapeMismatch("need at least two test points")
    mean = np.zeros((m, m))
    m2 = np.zeros((m, m))
    for b, tree in enumerate(forest.trees, start=1):
        mb = leaf_response_means(tree, forest.responses)[tree.apply(X)]
        delta = mb[:, None] - mb[None, :]
        step = delta - mean
        mean += step / b
        m2 += step * (delta - mean)
    var = m2 / forest.num_trees
    iu = np.triu_indices(m, 1)
    return float(0.5 * var[iu].mean())
