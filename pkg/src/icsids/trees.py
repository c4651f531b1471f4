"""CART decision tree with exact Gini split search, plus forest and AdaBoost.

Split search is vectorised per node: every feature column is sorted once,
cumulative (weighted) class counts give the impurity of every midpoint
candidate, and the best candidate wins with ties broken by lower feature
index and then lower threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyNode, SingleClassDataset

TIE_TOL = 1e-12


def gini(count_pos: float, count_neg: float) -> float:
    total = count_pos + count_neg
    if count_pos < 0 or count_neg < 0 or total <= 0:
        raise EmptyNode(f"gini needs non-negative counts with positive total, got ({count_pos}, {count_neg})")
    p = count_pos / total
    q = count_neg / total
    return 1.0 - p * p - q * q


@dataclass(frozen=True)
class TreeHyper:
    max_depth: int = 12
    min_samples_leaf: int = 5
    min_impurity_decrease: float = 1e-7

    def __post_init__(self):
        if self.max_depth < 1 or self.min_samples_leaf < 1 or self.min_impurity_decrease <= 0:
            raise ValueError("tree hyperparameters must be positive")


@dataclass(frozen=True)
class Leaf:
    prob: float
    count: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Leaf | Split"
    right: "Leaf | Split"


@dataclass(frozen=True)
class SplitChoice:
    feature: int
    threshold: float
    decrease: float
    n_left: int


def best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray, min_samples_leaf: int) -> SplitChoice | None:
    """Exhaustive midpoint search over every feature of one node's rows."""
    n, d = X.shape
    if n < 2 * min_samples_leaf or d == 0:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ws = w[order]
    ps = (w * y)[order]
    cw = np.cumsum(ws, axis=0)[:-1]
    cp = np.cumsum(ps, axis=0)[:-1]
    W = cw[-1] + ws[-1]
    P = cp[-1] + ps[-1]
    parent = 2.0 * P[0] * (W[0] - P[0]) / (W[0] * W[0])
    wr, pr = W - cw, P - cp
    with np.errstate(divide="ignore", invalid="ignore"):
        child = (2.0 / W) * (cp * (cw - cp) / cw + pr * (wr - pr) / wr)
    dec = parent - child
    pos = np.arange(n - 1)[:, None]
    valid = (xs[:-1] < xs[1:]) & (pos >= min_samples_leaf - 1) & (pos <= n - min_samples_leaf - 1)
    valid &= np.isfinite(dec)
    if not valid.any():
        return None
    dec = np.where(valid, dec, -np.inf)
    top = dec.max()
    cand = dec >= top - TIE_TOL
    j = int(np.argmax(cand.any(axis=0)))
    i = int(np.argmax(cand[:, j]))
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return SplitChoice(j, float(thr), float(dec[i, j]), i + 1)


@dataclass(eq=False)
class Tree:
    """Flat pre-order node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    prob: np.ndarray
    count: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        def rec(i):
            return 0 if self.feature[i] < 0 else 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def root(self) -> Leaf | Split:
        def rec(i):
            if self.feature[i] < 0:
                return Leaf(float(self.prob[i]), int(self.count[i]))
            return Split(int(self.feature[i]), float(self.threshold[i]), rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row lands in."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] < self.n_features:
            raise DimensionMismatch(f"tree expects {self.n_features} features, got {X.shape}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r, nd = rows[active], node[active]
            go_left = X[r, f[active]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"tag": "leaf", "prob": float(self.prob[i]), "count": int(self.count[i])})
            else:
                nodes.append({
                    "tag": "split",
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "count": int(self.count[i]),
                })
        return {"n_features": self.n_features, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        prob = np.zeros(n)
        count = np.zeros(n, dtype=np.int64)

        def rec(i):
            node = nodes[i]
            count[i] = node["count"]
            if node["tag"] == "leaf":
                prob[i] = node["prob"]
                return i + 1
            if node["tag"] != "split":
                raise ValueError(f"unknown node tag {node['tag']!r}")
            feature[i], threshold[i] = node["feature"], node["threshold"]
            left[i] = i + 1
            nxt = rec(i + 1)
            right[i] = nxt
            return rec(nxt)

        if rec(0) != n:
            raise ValueError("malformed pre-order node list")
        return cls(feature, threshold, left, right, prob, count, int(d["n_features"]))


def fit_tree(
    X, y, hyper: TreeHyper = TreeHyper(), sample_weight=None, rng=None, max_features: int | None = None
) -> Tree:
    """Greedy CART growth.

    With ``max_features`` below the column count each node searches a fresh
    random subset of that many columns drawn from ``rng`` (forest mode);
    otherwise the search is exact and ``rng`` is unused.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = X.shape
    if n < 1:
        raise EmptyNode("cannot fit a tree on zero rows")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    subset = max_features is not None and max_features < d
    if subset and rng is None:
        raise ValueError("per-node feature subsets need an rng")
    feature, threshold, left, right, prob, count = [], [], [], [], [], []

    def new_node(idx):
        tw = w[idx].sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        prob.append(float((w[idx] * y[idx]).sum() / tw) if tw > 0 else float(y[idx].mean()))
        count.append(idx.size)
        return len(feature) - 1

    def grow(idx, depth):
        me = new_node(idx)
        p = prob[me]
        if depth >= hyper.max_depth or p <= 0.0 or p >= 1.0:
            return me
        if subset:
            cols = np.sort(rng.choice(d, size=max_features, replace=False))
            choice = best_split(X[np.ix_(idx, cols)], y[idx], w[idx], hyper.min_samples_leaf)
            if choice is not None:
                choice = SplitChoice(int(cols[choice.feature]), choice.threshold, choice.decrease, choice.n_left)
        else:
            choice = best_split(X[idx], y[idx], w[idx], hyper.min_samples_leaf)
        if choice is None or choice.decrease < hyper.min_impurity_decrease:
            return me
        go_left = X[idx, choice.feature] <= choice.threshold
        feature[me], threshold[me] = choice.feature, choice.threshold
        left[me] = grow(idx[go_left], depth + 1)
        right[me] = grow(idx[~go_left], depth + 1)
        return me

    grow(np.arange(n), 0)
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(prob),
        np.asarray(count, dtype=np.int64),
        d,
    )


def predict_tree(tree: Tree, X) -> tuple[np.ndarray, np.ndarray]:
    p = tree.prob[tree.apply(X)]
    return p, (p >= 0.5).astype(np.int64)


# -- random forest ------------------------------------------------------------


def _need_both(y):
    y = np.asarray(y).ravel()
    if y.size == 0 or y.min() == y.max():
        raise SingleClassDataset("ensemble baselines need both classes")


@dataclass(eq=False)
class ForestModel:
    trees: list[Tree]
    max_features: int
    seed: int = 0

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += predict_tree(tree, X)[1]
        p = votes / len(self.trees)
        return p, (p >= 0.5).astype(np.int64)


def fit_random_forest(
    X,
    y,
    n_trees: int = 100,
    feature_frac: float | None = None,
    hyper: TreeHyper = TreeHyper(),
    seed: int = 0,
    bootstrap: bool = True,
) -> ForestModel:
    """Bagged trees on bootstrap samples, each node searching a random column subset.

    ``feature_frac`` defaults to sqrt(d)/d; the subset never drops below one column.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    _need_both(y)
    n, d = X.shape
    frac = math.sqrt(d) / d if feature_frac is None else feature_frac
    m = min(d, max(1, int(round(frac * d))))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(fit_tree(X[rows], y[rows], hyper, rng=rng, max_features=m))
    return ForestModel(trees, m, seed)


# -- AdaBoost -----------------------------------------------------------------

STUMP = TreeHyper(max_depth=1, min_samples_leaf=1)


@dataclass(eq=False)
class AdaBoostModel:
    stumps: list[Tree]
    weights: list[float]
    weight_history: list[np.ndarray] = field(default_factory=list, repr=False)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        score = np.zeros(X.shape[0])
        for stump, beta in zip(self.stumps, self.weights):
            score += beta * predict_tree(stump, X)[1]
        p = score / sum(self.weights)
        return p, (p >= 0.5).astype(np.int64)


def fit_adaboost(X, y, n_rounds: int = 100, seed: int = 0, keep_history: bool = False) -> AdaBoostModel:
    """Two-class SAMME with depth-1 stumps grown on the reweighted sample.

    Stops early when a stump is perfect (its weight is capped at a finite
    value) or no better than chance. ``seed`` is recorded for provenance; the
    stump search is deterministic.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel().astype(np.int64)
    _need_both(y)
    n = y.size
    w = np.full(n, 1.0 / n)
    stumps, betas, history = [], [], []
    cap = math.log((1.0 - 1e-10) / 1e-10)
    for _ in range(n_rounds):
        stump = fit_tree(X, y, STUMP, sample_weight=w)
        miss = predict_tree(stump, X)[1] != y
        err = float(w[miss].sum())
        if err >= 0.5:
            if not stumps:
                stumps.append(stump)
                betas.append(1.0)
            break
        beta = cap if err <= 1e-10 else math.log((1.0 - err) / err)
        stumps.append(stump)
        betas.append(beta)
        if err <= 1e-10:
            break
        w = w * np.exp(beta * miss)
        w /= w.sum()
        if keep_history:
            history.append(w.copy())
    return AdaBoostModel(stumps, betas, history)
