from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import labeled_blobs
from smerf.core import BINARY, Hyperparams, ShapeMismatch, derive_stream
from smerf.impurity import avg_pairwise_distance, gini_impurity, sample_variance
from smerf.reductions import (
    LabeledData,
    absolute_distance,
    assert_tree_equivalence,
    grow_reference_tree,
    indicator_distance,
    regression_tree_predict,
    squared_half_distance,
)
from smerf.tree import grow_tree, tree_predict


class TestAdapters:
    def test_indicator_examples(self):
        np.testing.assert_array_equal(indicator_distance([4, 4, 4]), np.zeros((3, 3)))
        np.testing.assert_array_equal(indicator_distance([1, 2]), [[0, 1], [1, 0]])
        assert avg_pairwise_distance(indicator_distance([1, 1, 2, 3]), range(4)) == pytest.approx(0.625)

    def test_half_squared_examples(self):
        np.testing.assert_array_equal(squared_half_distance([2.5, 2.5]), np.zeros((2, 2)))
        assert squared_half_distance([0.0, 2.0])[0, 1] == 2.0

    def test_absolute(self):
        assert absolute_distance([1.0, -2.0])[1, 0] == 3.0

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
    def test_indicator_symmetric_zero_diag(self, labels):
        Z = indicator_distance(labels)
        assert np.array_equal(Z, Z.T) and np.all(np.diag(Z) == 0)
        assert avg_pairwise_distance(Z, range(len(labels))) == pytest.approx(
            gini_impurity(labels, range(len(labels))), rel=1e-12, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
    def test_half_squared_is_variance(self, y):
        Z = squared_half_distance(y)
        assert np.array_equal(Z, Z.T) and np.all(np.diag(Z) == 0)
        assert avg_pairwise_distance(Z, range(len(y))) == pytest.approx(
            sample_variance(y, range(len(y))), rel=1e-9, abs=1e-9)

    def test_labeled_data_needs_one(self):
        with pytest.raises(ValueError):
            LabeledData()
        with pytest.raises(ValueError):
            LabeledData(labels=[1], responses=[1.0])


class TestReferenceTrees:
    def test_pure_labels_leaf(self, rng):
        X = rng.normal(size=(20, 3))
        t = grow_reference_tree(X, LabeledData(labels=np.ones(20)), Hyperparams(), derive_stream(0, 0))
        assert t.n_nodes == 1

    def test_two_point_two_class(self):
        X = np.array([[0.0], [1.0]])
        hp = Hyperparams(sampling="subsample", subsample_size=2)
        t = grow_reference_tree(X, LabeledData(labels=[0, 1]), hp, derive_stream(0, 0))
        assert t.n_leaves == 2 and t.threshold[0] == 0.5

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            grow_reference_tree(rng.normal(size=(5, 2)), LabeledData(labels=[0, 1]), Hyperparams(),
                                derive_stream(0, 0))

    @pytest.mark.parametrize("seed", range(5))
    def test_gini_equivalence(self, seed):
        r = np.random.default_rng(seed)
        X, labels = labeled_blobs(r, 120, 5, 3)
        hp = Hyperparams(d=2, seed=seed)
        smerf_tree = grow_tree(X, indicator_distance(labels), hp, derive_stream(seed, 0))
        ref = grow_reference_tree(X, LabeledData(labels=labels), hp, derive_stream(seed, 0))
        result = assert_tree_equivalence(smerf_tree, ref)
        assert result, result.report

    @pytest.mark.parametrize("seed", range(5))
    def test_variance_equivalence_binary(self, seed):
        r = np.random.default_rng(100 + seed)
        X = r.normal(size=(100, 6))
        y = X[:, 0] - X[:, 1] ** 2 + 0.3 * r.normal(size=100)
        hp = Hyperparams(d=3, projection=BINARY, lam=2.0, min_parent=4)
        smerf_tree = grow_tree(X, squared_half_distance(y), hp, derive_stream(seed, 0))
        ref = grow_reference_tree(X, LabeledData(responses=y), hp, derive_stream(seed, 0))
        result = assert_tree_equivalence(smerf_tree, ref)
        assert result, result.report


class TestTreeEquivalence:
    @pytest.fixture
    def tree(self, rng):
        X, labels = labeled_blobs(rng, 60, 3, 2)
        return grow_tree(X, indicator_distance(labels), Hyperparams(), derive_stream(1, 0))

    def test_self(self, tree):
        assert assert_tree_equivalence(tree, tree).equal

    def test_perturbed_threshold_reported(self, tree):
        nodes = tree.split_nodes()
        target = nodes[min(2, nodes.size - 1)]
        thr = tree.threshold.copy()
        thr[target] += 0.1
        other = replace(tree, threshold=thr)
        result = assert_tree_equivalence(tree, other)
        assert not result
        assert "threshold" in result.report and result.report.startswith("root")

    def test_path_names_the_node(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        Z = indicator_distance([0, 1, 2, 3])
        hp = Hyperparams(sampling="subsample", subsample_size=4)
        t = grow_tree(X, Z, hp, derive_stream(0, 0))
        thr = t.threshold.copy()
        # all gains tie, so the first threshold wins: point 0 alone goes left
        assert t.left[t.left[0]] < 0
        thr[t.right[0]] += 0.1
        result = assert_tree_equivalence(t, replace(t, threshold=thr))
        assert result.report.startswith("root/R:")


class TestRegressionIdentity:
    @pytest.mark.parametrize("seed", range(3))
    def test_tree_distance_is_half_squared_mean_difference(self, seed):
        r = np.random.default_rng(seed)
        X = r.uniform(size=(80, 3))
        y = X[:, 0] + r.normal(scale=0.1, size=80)
        hp = Hyperparams(d=2, sampling="subsample", subsample_size=50)
        t = grow_tree(X, squared_half_distance(y), hp, derive_stream(seed, 0))
        ref = grow_reference_tree(X, LabeledData(responses=y), hp, derive_stream(seed, 0))
        Xt = r.uniform(size=(15, 3))
        m = regression_tree_predict(ref, y, Xt)
        Z = squared_half_distance(y)
        for i in range(15):
            for j in range(15):
                assert tree_predict(t, Z, Xt[i], Xt[j]) == pytest.approx(0.5 * (m[i] - m[j]) ** 2, abs=1e-15)
