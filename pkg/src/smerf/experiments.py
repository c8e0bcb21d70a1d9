"""End-to-end runs: simulated distance recovery, link prediction, and the
noise-variance convergence sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import BINARY, AXIS, BOOTSTRAP, Hyperparams
from .forest import SmerfForest, make_grid, predict_matrix, train_forest, tree_variance_term, tune
from .metrics import EvalReport, evaluate_distances, evaluate_links
from .simdata import gen_additive_theory, generate

log = logging.getLogger(__name__)

__all__ = [
    "DistanceRun",
    "run_distance_experiment",
    "split_nodes",
    "run_linkpred",
    "theory_sweep",
]


@dataclass
class DistanceRun:
    report: EvalReport
    forest: SmerfForest
    hp: Hyperparams


def run_distance_experiment(family: str, n_train: int, seed: int, n_test: int = 200,
                            hp: Optional[Hyperparams] = None,
                            grid: Optional[Sequence[Hyperparams]] = None,
                            n_jobs: Optional[int] = None) -> DistanceRun:
    """Train on ``n_train`` points of a simulated family and score on ``n_test`` fresh ones.

    With ``grid`` the hyperparameters are chosen by out-of-bag RMSE;
    otherwise ``hp`` (default: sparse binary projections) is used as is.
    """
    data = generate(family, n_train + n_test, seed)
    train = data.subset(np.arange(n_train))
    test = data.subset(np.arange(n_train, n_train + n_test))
    if grid is not None:
        hp, _, forest = tune(train.X, train.Z, grid, seed=seed, n_jobs=n_jobs, return_forest=True)
    else:
        hp = replace(hp or Hyperparams(projection=BINARY), seed=seed)
        forest = train_forest(train.X, train.Z, hp, n_jobs=n_jobs)
    pred = predict_matrix(forest, test.X, n_jobs=n_jobs)
    return DistanceRun(evaluate_distances(pred, test.Z), forest, hp)


def split_nodes(n: int, tp: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Node-wise train/test split with training proportion ``tp``."""
    rng = np.random.default_rng(seed)
    n_train = int(round(tp * n))
    n_train = min(max(n_train, 2), n - 2)
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def run_linkpred(A, attributes, tp: float, seed: int, hp: Optional[Hyperparams] = None,
                 grid: Optional[Sequence[Hyperparams]] = None, zero_diagonal: bool = False,
                 include_cross: bool = False, n_jobs: Optional[int] = None) -> EvalReport:
    """Link prediction from node attributes with ``Z = 1 - A``.

    Nodes are split into train and test sets; the forest is trained on the
    training nodes and scores ``1 - predicted distance`` on every unordered
    test-test pair (plus train-test pairs with ``include_cross``).
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(attributes, dtype=np.float64)
    n = A.shape[0]
    tr, te = split_nodes(n, tp, seed)
    Z = 1.0 - A
    if zero_diagonal:
        np.fill_diagonal(Z, 0.0)
    Z_train = Z[np.ix_(tr, tr)]
    log.info("tp=%.2f: %d training nodes (%d node pairs), %d test nodes (%d node pairs)",
             tp, tr.size, (tr.size**2 - tr.size) // 2, te.size, (te.size**2 - te.size) // 2)
    if grid is not None:
        hp, _, forest = tune(X[tr], Z_train, grid, seed=seed, n_jobs=n_jobs, return_forest=True)
    else:
        hp = replace(hp or Hyperparams(), seed=seed)
        forest = train_forest(X[tr], Z_train, hp, n_jobs=n_jobs)

    if include_cross:
        rows = np.concatenate([te, tr])
        pred = predict_matrix(forest, X[rows], n_jobs=n_jobs)
        mask = np.zeros((rows.size, rows.size), dtype=bool)
        mask[: te.size, :] = True
        mask = np.triu(mask, 1)
    else:
        rows = te
        pred = predict_matrix(forest, X[rows], n_jobs=n_jobs)
        mask = np.triu(np.ones((rows.size, rows.size), dtype=bool), 1)
    scores = 1.0 - pred[mask]
    labels = A[np.ix_(rows, rows)][mask] > 0.5
    return evaluate_links(scores, labels)


def theory_sweep(exponents: Iterable[int], seed: int = 0, num_trees: int = 1000,
                 n_test: int = 200, d: int = 1, n_jobs: Optional[int] = None) -> List[Tuple[int, float]]:
    """``s_n`` (average half-variance over trees of the signed leaf-response
    difference) for ``n = 2^k`` training points of the additive model.

    Trees are bootstrapped and fully grown on ``z = (y_i - y_j)^2 / 2``.
    """
    rows = []
    for k in exponents:
        n = 2 ** int(k)
        data = gen_additive_theory(n + n_test, seed + int(k))
        train = data.subset(np.arange(n))
        X_test = data.X[n:]
        hp = Hyperparams(num_trees=num_trees, d=d, min_parent=2, sampling=BOOTSTRAP,
                         projection=AXIS, seed=seed + int(k))
        forest = train_forest(train.X, train.Z, hp, responses=train.y, n_jobs=n_jobs)
        s = tree_variance_term(forest, X_test)
        log.info("n=%d s_n=%.5f", n, s)
        rows.append((n, s))
    return rows
