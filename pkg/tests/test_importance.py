from dataclasses import replace

import numpy as np
import pytest

from smerf.core import Hyperparams
from smerf.forest import train_forest
from smerf.importance import feature_importance


def test_single_leaf_forest_all_zero():
    X = np.random.default_rng(0).normal(size=(20, 4))
    forest = train_forest(X, np.zeros((20, 20)), Hyperparams(num_trees=5))
    imp = feature_importance(forest)
    assert np.all(imp.raw == 0) and np.all(imp.normalized == 0)


def test_only_informative_feature_used():
    r = np.random.default_rng(1)
    X = np.zeros((60, 5))
    X[:, 3] = r.uniform(size=60)
    Z = (X[:, 3][:, None] - X[:, 3][None, :]) ** 2
    forest = train_forest(X, Z, Hyperparams(num_trees=10, d=5))
    np.testing.assert_array_equal(feature_importance(forest).normalized, [0, 0, 0, 1, 0])


def test_raw_is_sum_of_gains():
    r = np.random.default_rng(2)
    X = r.uniform(size=(50, 3))
    Z = (X[:, 0][:, None] - X[:, 0][None, :]) ** 2 + 0.1 * np.abs(X[:, 1][:, None] - X[:, 1][None, :])
    forest = train_forest(X, Z, Hyperparams(num_trees=8, d=2, seed=3))
    expected = np.zeros(3)
    for t in forest.trees:
        for node in t.split_nodes():
            expected[t.projection(node).features[0]] += t.gain[node]
    imp = feature_importance(forest)
    np.testing.assert_allclose(imp.raw, expected, rtol=1e-12)
    assert imp.normalized.max() == 1.0 and np.all(imp.raw >= 0)


def test_binary_projection_credits_every_member():
    r = np.random.default_rng(3)
    X = r.uniform(size=(40, 6))
    Z = (X[:, 0][:, None] - X[:, 0][None, :]) ** 2
    forest = train_forest(X, Z, Hyperparams(num_trees=4, d=3, projection="binary", lam=3.0))
    expected = np.zeros(6)
    for t in forest.trees:
        for node in t.split_nodes():
            for f in t.projection(node).features:
                expected[f] += t.gain[node]
    np.testing.assert_allclose(feature_importance(forest).raw, expected, rtol=1e-12)


def test_tree_order_invariant():
    r = np.random.default_rng(4)
    X = r.uniform(size=(40, 4))
    Z = np.abs(X[:, 1][:, None] - X[:, 1][None, :])
    forest = train_forest(X, Z, Hyperparams(num_trees=6, seed=2))
    a = feature_importance(forest)
    b = feature_importance(replace(forest, trees=forest.trees[::-1]))
    np.testing.assert_allclose(a.raw, b.raw, rtol=1e-12)


def test_column_permutation():
    # with d = p every feature is a candidate at every node, so permuting
    # the columns only relabels them; min_parent keeps nodes large enough
    # that no two features tie on gain (ties resolve by draw order)
    r = np.random.default_rng(5)
    X = r.uniform(size=(60, 4))
    y = 3 * X[:, 0] + X[:, 2]
    Z = (y[:, None] - y[None, :]) ** 2
    perm = np.array([2, 0, 3, 1])
    hp = Hyperparams(num_trees=5, d=4, min_parent=10, sampling="subsample", subsample_size=60)
    a = feature_importance(train_forest(X, Z, hp)).raw
    b = feature_importance(train_forest(X[:, perm], Z, hp)).raw
    np.testing.assert_allclose(b, a[perm], rtol=1e-9)
