"""Canonical dataset type, min-max scaling, splits and class rebalancing."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, SingleClassDataset

ATTACK, NORMAL = 1, 0
LABEL_NAMES = {ATTACK: "Attack", NORMAL: "Normal"}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus binary labels (1 = Attack, 0 = Normal).

    Arrays are copied and frozen on construction so a Dataset can be shared
    between branch-training tasks without defensive copies.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, len(self.feature_names))
        y = np.array(self.labels, dtype=np.int64, copy=True).ravel()
        if X.ndim != 2:
            raise DimensionMismatch("features must be a 2-D matrix")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.isfinite(X).all():
            raise ValueError("features contain non-finite values")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (Normal) or 1 (Attack)")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} names for {X.shape[1]} features")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_attack(self) -> int:
        return int(self.labels.sum())

    @property
    def n_normal(self) -> int:
        return self.n_samples - self.n_attack

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)

    def with_features(self, X: np.ndarray, names: Sequence[str] | None = None) -> "Dataset":
        return Dataset(X, self.labels, tuple(names) if names is not None else self.feature_names)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        h.update("\x1f".join(self.feature_names).encode())
        return h.hexdigest()[:16]

    def to_delimited(self, delimiter: str = ",", label_column: str = "label") -> str:
        """Header line plus one row per sample; floats in shortest round-trip form."""
        lines = [delimiter.join((*self.feature_names, label_column))]
        for row, lab in zip(self.features.tolist(), self.labels.tolist()):
            lines.append(delimiter.join((*map(repr, row), LABEL_NAMES[lab])))
        return "\n".join(lines) + "\n"


def _require_both_classes(data: Dataset) -> None:
    if data.n_attack == 0 or data.n_normal == 0:
        raise SingleClassDataset(
            f"need both classes, got {data.n_attack} attack / {data.n_normal} normal rows"
        )


# -- normalization ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    min: np.ndarray
    max: np.ndarray


def minmax_fit(train: Dataset) -> NormalizationParams:
    if train.n_samples == 0:
        raise EmptyDataset("cannot fit normalization on an empty dataset")
    return NormalizationParams(train.features.min(axis=0), train.features.max(axis=0))


def minmax_transform(params: NormalizationParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.min.shape[0]:
        raise DimensionMismatch(
            f"expected {params.min.shape[0]} features, got shape {X.shape}"
        )
    span = params.max - params.min
    safe = np.where(span > 0, span, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        Z = (X - params.min) / safe
    Z[:, span <= 0] = 0.0
    return np.clip(Z, 0.0, 1.0)


def minmax_apply(params: NormalizationParams, data: Dataset) -> Dataset:
    return data.with_features(minmax_transform(params, data.features))


# -- splits -------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    seed: int = 0
    test_fraction: float = 0.2
    repetitions: int = 10
    kfold: bool = False

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFFFFFFFFFF for k in key])


def stratified_split_indices(labels: np.ndarray, plan: SplitPlan, repetition_index: int):
    labels = np.asarray(labels)
    if not 0 <= repetition_index < plan.repetitions:
        raise IndexError(f"repetition_index {repetition_index} outside [0, {plan.repetitions})")
    rng = _rng(plan.seed, repetition_index)
    train_idx, test_idx = [], []
    for cls in (NORMAL, ATTACK):
        idx = np.flatnonzero(labels == cls)
        if plan.kfold:
            # every fold must slice the same permutation, so it ignores repetition_index
            perm = _rng(plan.seed, cls).permutation(idx)
            folds = np.array_split(perm, plan.repetitions)
            test_idx.append(folds[repetition_index])
            train_idx.append(np.concatenate([f for i, f in enumerate(folds) if i != repetition_index]))
        else:
            perm = rng.permutation(idx)
            n_test = int(round(plan.test_fraction * idx.size))
            test_idx.append(perm[:n_test])
            train_idx.append(perm[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def stratified_split(data: Dataset, plan: SplitPlan, repetition_index: int) -> tuple[Dataset, Dataset]:
    """Repeated stratified random hold-out split (or a k-fold slice if ``plan.kfold``)."""
    _require_both_classes(data)
    tr, te = stratified_split_indices(data.labels, plan, repetition_index)
    return data.take(tr), data.take(te)


def iter_splits(data: Dataset, plan: SplitPlan) -> Iterator[tuple[int, Dataset, Dataset]]:
    for r in range(plan.repetitions):
        yield (r, *stratified_split(data, plan, r))


# -- rebalancing --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BalancedSets:
    subsets: tuple[Dataset, ...]
    replacement: bool = False
    discarded_normals: int = 0
    partition_attacks: bool = False

    @property
    def k(self) -> int:
        return len(self.subsets)


def make_balanced_sets(train: Dataset, k: int = 4, seed: int = 0, partition_attacks: bool = False) -> BalancedSets:
    """Split training rows into ``k`` subsets with equal attack/normal counts.

    By default every subset holds all attack rows and its own disjoint chunk
    of shuffled normal rows. When there are not enough normals for ``k``
    disjoint chunks, normals are drawn with replacement and the flag is set.
    With ``partition_attacks`` the attack rows are split across the subsets
    instead of shared.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_both_classes(train)
    rng = _rng(seed, 0xBA1)
    att = rng.permutation(np.flatnonzero(train.labels == ATTACK))
    nor = rng.permutation(np.flatnonzero(train.labels == NORMAL))
    if partition_attacks:
        if att.size < k:
            raise ValueError(f"cannot partition {att.size} attack rows into {k} subsets")
        att_chunks = np.array_split(att, k)
    else:
        att_chunks = [att] * k
    need = sum(c.size for c in att_chunks)
    replacement = nor.size < need
    subsets, offset = [], 0
    for a in att_chunks:
        if replacement:
            n = rng.choice(nor, size=a.size, replace=True)
        else:
            n = nor[offset:offset + a.size]
            offset += a.size
        idx = rng.permutation(np.concatenate([a, n]))
        subsets.append(train.take(idx))
    discarded = 0 if replacement else int(nor.size - offset)
    return BalancedSets(tuple(subsets), replacement, discarded, partition_attacks)


def subsample_attacks(data: Dataset, ratio: float, seed: int = 0) -> Dataset:
    """Keep ceil(ratio * n_attack) randomly chosen attack rows and every normal row.

    Row order is preserved, so ratio 1.0 returns the data unchanged.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must lie in (0, 1]")
    att = np.flatnonzero(data.labels == ATTACK)
    # tolerance guards against 0.7 * 10 == 7.000000000000001
    keep_n = min(att.size, math.ceil(ratio * att.size - 1e-9))
    if keep_n == att.size:
        return data
    kept = _rng(seed, 0x5AB).choice(att, size=keep_n, replace=False)
    mask = data.labels == NORMAL
    mask[kept] = True
    return data.take(np.flatnonzero(mask))


def class_balance(labels) -> dict:
    labels = np.asarray(labels)
    n = labels.size
    a = int(labels.sum())
    return {"n": n, "attack": a, "normal": n - a, "attack_fraction": a / n if n else 0.0}


def concat(parts: Sequence[Dataset]) -> Dataset:
    names = parts[0].feature_names
    return Dataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        names,
    )
