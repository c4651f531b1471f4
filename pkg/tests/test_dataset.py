import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from icsids.dataset import (
    Dataset,
    NormalizationParams,
    SplitPlan,
    make_balanced_sets,
    minmax_apply,
    minmax_fit,
    stratified_split,
    stratified_split_indices,
    subsample_attacks,
)
from icsids.errors import DimensionMismatch, EmptyDataset, SingleClassDataset


def labelled(n_normal, n_attack, d=2, seed=0):
    """Rows carry a unique id in column 0 so row identity survives shuffling."""
    rng = np.random.default_rng(seed)
    n = n_normal + n_attack
    X = np.column_stack([np.arange(n, dtype=float), rng.normal(size=(n, d - 1))])
    y = np.r_[np.zeros(n_normal, int), np.ones(n_attack, int)]
    return Dataset(X, y)


def test_minmax_fit_examples():
    p = minmax_fit(Dataset([[2.0], [4.0], [10.0]], [0, 1, 0]))
    assert (p.min[0], p.max[0]) == (2.0, 10.0)
    p = minmax_fit(Dataset([[5.0, 1.0], [5.0, -3.0], [5.0, 7.0]], [0, 1, 0]))
    assert p.min.tolist() == [5.0, -3.0] and p.max.tolist() == [5.0, 7.0]
    with pytest.raises(EmptyDataset):
        minmax_fit(Dataset(np.zeros((0, 1)), []))


def test_minmax_apply_examples():
    params = NormalizationParams(np.array([0.0, 5.0]), np.array([10.0, 5.0]))
    out = minmax_apply(params, Dataset([[5.0, 5.0], [0.0, 9.0], [10.0, 1.0], [12.0, 5.0]], [0, 0, 1, 1]))
    assert out.features[:, 0].tolist() == [0.5, 0.0, 1.0, 1.0]
    assert out.features[:, 1].tolist() == [0.0, 0.0, 0.0, 0.0]  # constant column
    with pytest.raises(DimensionMismatch):
        minmax_apply(params, Dataset([[1.0]], [0]))


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)),
       arrays(np.float64, (5, 4), elements=st.floats(-1e7, 1e7, allow_nan=False)))
def test_minmax_range_properties(train, test):
    ds = Dataset(train, np.zeros(train.shape[0], int))
    params = minmax_fit(ds)
    z = minmax_apply(params, ds).features
    assert z.min() >= 0.0 and z.max() <= 1.0
    for j in range(train.shape[1]):
        if params.max[j] > params.min[j]:
            assert (z[:, j] == 0.0).any() and (z[:, j] == 1.0).any()
    zt = minmax_apply(params, Dataset(test[:, : train.shape[1]], np.zeros(5, int))).features
    assert zt.min() >= 0.0 and zt.max() <= 1.0


def test_stratified_split_counts_and_determinism():
    data = labelled(80, 20)
    plan = SplitPlan(seed=7)
    train, test = stratified_split(data, plan, 0)
    assert (test.n_normal, test.n_attack) == (16, 4)
    assert (train.n_normal, train.n_attack) == (64, 16)
    ids_tr, ids_te = set(train.features[:, 0]), set(test.features[:, 0])
    assert not ids_tr & ids_te and len(ids_tr | ids_te) == 100
    a = stratified_split_indices(data.labels, plan, 0)
    b = stratified_split_indices(data.labels, plan, 0)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = stratified_split_indices(data.labels, plan, 1)
    assert not np.array_equal(a[1], c[1])


def test_kfold_mode_partitions():
    data = labelled(50, 10)
    plan = SplitPlan(seed=1, repetitions=5, kfold=True)
    seen = []
    for r in range(5):
        _, te = stratified_split_indices(data.labels, plan, r)
        seen.extend(te.tolist())
    assert sorted(seen) == list(range(60))


def test_split_requires_two_classes():
    with pytest.raises(SingleClassDataset):
        stratified_split(labelled(10, 0), SplitPlan(), 0)


def _normal_ids(subset):
    return subset.features[subset.labels == 0, 0]


def test_balanced_sets_disjoint_chunks():
    data = labelled(400, 100)
    sets = make_balanced_sets(data, 4, seed=3)
    assert not sets.replacement and sets.k == 4
    attack_ids = set(data.features[data.labels == 1, 0])
    all_normals = []
    for s in sets.subsets:
        assert s.n_samples == 200 and s.n_attack == 100 and s.n_normal == 100
        assert set(s.features[s.labels == 1, 0]) == attack_ids
        all_normals.extend(_normal_ids(s))
    assert len(all_normals) == len(set(all_normals)) == 400


def test_balanced_sets_replacement_flag():
    sets = make_balanced_sets(labelled(100, 100), 4, seed=3)
    assert sets.replacement
    for s in sets.subsets:
        assert s.n_attack == s.n_normal == 100


def test_balanced_single_set_is_whole_training_data():
    data = labelled(100, 100)
    (only,) = make_balanced_sets(data, 1, seed=0).subsets
    assert sorted(only.features[:, 0]) == list(range(200))


def test_partition_attacks_mode():
    sets = make_balanced_sets(labelled(400, 100), 4, seed=0, partition_attacks=True)
    att = [set(s.features[s.labels == 1, 0]) for s in sets.subsets]
    assert sum(len(a) for a in att) == 100 and len(set().union(*att)) == 100
    for s in sets.subsets:
        assert s.n_attack == s.n_normal == 25


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(1, 80), st.integers(1, 6), st.integers(0, 2**32))
def test_balanced_sets_property(n_normal, n_attack, k, seed):
    sets = make_balanced_sets(labelled(n_normal, n_attack), k, seed)
    normals = []
    for s in sets.subsets:
        assert s.n_attack == s.n_normal
        normals.extend(_normal_ids(s))
    if not sets.replacement:
        assert len(normals) == len(set(normals))


def test_subsample_examples():
    data = labelled(50, 1000)
    assert subsample_attacks(data, 0.1, seed=0).n_attack == 100
    assert subsample_attacks(labelled(5, 7), 0.5, seed=0).n_attack == 4
    assert subsample_attacks(data, 1.0) is data


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.floats(0.01, 1.0), st.integers(0, 2**32))
def test_subsample_properties(n_normal, n_attack, ratio, seed):
    data = labelled(n_normal, n_attack, seed=seed % 100)
    out = subsample_attacks(data, ratio, seed)
    assert out.n_attack >= 1
    assert np.array_equal(out.features[out.labels == 0], data.features[data.labels == 0])
    again = subsample_attacks(data, ratio, seed)
    assert np.array_equal(out.features, again.features)


def test_export_round_trips_exactly():
    from icsids.ingest import parse_delimited, to_dataset

    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(size=(50, 3)) * 1e3, rng.integers(0, 2, 50), ("a", "b", "c"))
    back = to_dataset(parse_delimited(data.to_delimited()))
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)
    assert back.feature_names == data.feature_names
    assert back.fingerprint() == data.fingerprint()
