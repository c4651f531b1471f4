import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icsids.errors import EmptyNode, SingleClassDataset
from icsids.trees import (
    Leaf,
    Split,
    Tree,
    TreeHyper,
    best_split,
    fit_adaboost,
    fit_random_forest,
    fit_tree,
    gini,
    predict_tree,
)
from oracles import brute_force_split


def test_gini_hand_values():
    assert gini(1, 3) == pytest.approx(0.375)
    assert gini(2, 2) == 0.5
    assert gini(5, 0) == 0.0
    with pytest.raises(EmptyNode):
        gini(0, 0)


def toy_1d(n=20):
    x = (np.arange(n) + 0.5) / n
    return x.reshape(-1, 1), (x > 0.5).astype(int)


def test_one_dimensional_toy():
    X, y = toy_1d()
    tree = fit_tree(X, y, TreeHyper(min_samples_leaf=1))
    root = tree.root()
    assert isinstance(root, Split) and tree.depth() == 1
    assert 0.4 < root.threshold < 0.6
    assert np.array_equal(predict_tree(tree, X)[1], y)


def test_single_class_gives_leaf():
    tree = fit_tree(np.random.default_rng(0).random((10, 3)), np.ones(10))
    assert tree.root() == Leaf(1.0, 10)
    assert fit_tree(np.zeros((4, 1)), np.zeros(4)).root() == Leaf(0.0, 4)


def test_hyperparameters_respected():
    rng = np.random.default_rng(0)
    X = rng.random((300, 3))
    y = rng.integers(0, 2, 300)
    tree = fit_tree(X, y, TreeHyper(max_depth=3, min_samples_leaf=7))
    assert tree.depth() <= 3
    leaves = tree.feature < 0
    assert tree.count[leaves].min() >= 7


def test_tie_break_prefers_lower_feature():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    choice = best_split(X, np.array([0.0, 0, 1, 1]), np.ones(4), 1)
    assert (choice.feature, choice.threshold) == (0, 0.5)


@st.composite
def split_instance(draw):
    n = draw(st.integers(2, 50))
    d = draw(st.integers(1, 4))
    levels = draw(st.integers(2, 8))
    X = np.array(draw(st.lists(st.lists(st.integers(0, levels), min_size=d, max_size=d), min_size=n, max_size=n)),
                 dtype=float) / levels
    y = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=float)
    msl = draw(st.sampled_from([1, 2, 5]))
    weighted = draw(st.booleans())
    w = np.array(draw(st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n))) if weighted else np.ones(n)
    return X, y, w, msl


@settings(max_examples=150, deadline=None)
@given(split_instance())
def test_best_split_matches_brute_force(inst):
    X, y, w, msl = inst
    best, optima = brute_force_split(X, y, w, msl)
    got = best_split(X, y, w, msl)
    if best is None:
        assert got is None
        return
    assert got is not None
    assert got.decrease == pytest.approx(best, abs=1e-9)
    assert (got.feature, got.threshold) == min(optima)


def test_serialization_round_trip():
    rng = np.random.default_rng(0)
    X = rng.random((200, 4))
    y = (X[:, 0] * X[:, 2] > 0.25).astype(int)
    tree = fit_tree(X, y, TreeHyper(min_samples_leaf=2))
    back = Tree.from_dict(tree.to_dict())
    assert back.root() == tree.root()
    assert np.array_equal(predict_tree(back, X)[0], predict_tree(tree, X)[0])


def test_forest_reduces_to_single_tree():
    rng = np.random.default_rng(0)
    X, y = rng.random((80, 3)), rng.integers(0, 2, 80)
    forest = fit_random_forest(X, y, n_trees=1, feature_frac=1.0, bootstrap=False)
    assert np.array_equal(forest.predict(X)[1], predict_tree(fit_tree(X, y), X)[1])


def test_forest_on_xor():
    rng = np.random.default_rng(0)
    X = rng.random((400, 2))
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(int)
    forest = fit_random_forest(X, y, n_trees=100, seed=1)
    assert (forest.predict(X)[1] == y).mean() >= 0.95


def test_adaboost_on_separable_toy():
    X, y = toy_1d()
    model = fit_adaboost(X, y, n_rounds=100)
    assert len(model.stumps) == 1
    assert np.isfinite(model.weights[0])
    assert (model.predict(X)[1] == y).all()


def test_adaboost_weights_stay_normalised():
    rng = np.random.default_rng(0)
    X = rng.random((150, 2))
    y = (X[:, 0] + 0.3 * rng.normal(size=150) > 0.5).astype(int)
    model = fit_adaboost(X, y, n_rounds=20, keep_history=True)
    assert model.weight_history
    for w in model.weight_history:
        assert w.sum() == pytest.approx(1.0) and (w > 0).all()
    assert (model.predict(X)[1] == y).mean() > 0.8


def test_baselines_need_both_classes():
    X = np.zeros((5, 2))
    with pytest.raises(SingleClassDataset):
        fit_random_forest(X, np.ones(5))
    with pytest.raises(SingleClassDataset):
        fit_adaboost(X, np.zeros(5))
