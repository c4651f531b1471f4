"""Balanced-subset ensemble detector and the experiment harness around it.

Training, per branch ``i`` of ``k``:

1. scale the training split to [0, 1] (parameters kept for test time);
2. take balanced subset ``i`` (all attacks + a disjoint chunk of normals);
3. fit a stacked autoencoder on it and encode it;
4. fit a branch classifier on the codes with class-weighted BCE.

Every training row is then pushed through every branch, the branch features
are concatenated into a super-vector and a decision tree is fitted on the
full (still imbalanced) training set.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from . import metrics, neural
from .dataset import (
    Dataset,
    NormalizationParams,
    SplitPlan,
    make_balanced_sets,
    minmax_apply,
    minmax_fit,
    minmax_transform,
    stratified_split,
    subsample_attacks,
)
from .errors import ConfigParse, DimensionMismatch, EmptyDataset, NonFiniteLoss, UnsupportedVersion, WidthMismatch
from .trees import Tree, TreeHyper, fit_adaboost, fit_random_forest, fit_tree, predict_tree

HIDDEN, HIDDEN_PLUS_PROB, PROB_ONLY = "hidden", "hidden_plus_prob", "prob_only"
FUSION_MODES = (HIDDEN, HIDDEN_PLUS_PROB, PROB_ONLY)
ENSEMBLE_SCHEMA = "icsids.ensemble/1"
METHODS = ("proposed", "dt", "rf", "adaboost", "dnn")


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 4
    sae_hidden: tuple[int, ...] = (32, 16)
    dnn_hidden: tuple[int, ...] = (32, 16)
    fusion_mode: str = HIDDEN
    w_s: float = 2.0
    w_l: float = 1.0
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    dropout: float = 0.2
    max_depth: int = 12
    min_samples_leaf: int = 5
    min_impurity_decrease: float = 1e-7
    partition_attacks: bool = False
    seed: int = 0
    rf_trees: int = 100
    ada_rounds: int = 100
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigParse("k must be >= 1")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigParse(f"fusion_mode must be one of {FUSION_MODES}")
        if self.w_l != 1.0 or self.w_s < self.w_l:
            raise ConfigParse("w_l is fixed at 1 and w_s must be >= w_l")
        object.__setattr__(self, "sae_hidden", tuple(int(v) for v in self.sae_hidden))
        object.__setattr__(self, "dnn_hidden", tuple(int(v) for v in self.dnn_hidden))

    @property
    def tree(self) -> TreeHyper:
        return TreeHyper(self.max_depth, self.min_samples_leaf, self.min_impurity_decrease)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # scheduling only; never changes results
        d["sae_hidden"] = list(self.sae_hidden)
        d["dnn_hidden"] = list(self.dnn_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigParse(f"unknown pipeline config keys {sorted(unknown)}")
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def branch_seed(master: int, branch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master & 0xFFFFFFFF, 0xB7A, branch])


@dataclass(eq=False)
class Branch:
    sae: neural.SaeModel
    dnn: neural.MlpModel

    def outputs(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return neural.hidden_and_output(self.dnn, neural.encode(self.sae, Z))


def fuse(branch_outputs: Sequence[tuple[np.ndarray, np.ndarray]], mode: str = HIDDEN) -> np.ndarray:
    """Concatenate per-branch features into the super-vector, branch 0 first."""
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    if not branch_outputs:
        raise WidthMismatch("no branch outputs to fuse")
    widths = {np.shape(h)[-1] for h, _ in branch_outputs}
    rows = {np.shape(h)[0] for h, _ in branch_outputs} | {np.shape(p)[0] for _, p in branch_outputs}
    if len(widths) != 1 or len(rows) != 1:
        raise WidthMismatch(f"branch outputs disagree: widths {sorted(widths)}, rows {sorted(rows)}")
    blocks = []
    for h, p in branch_outputs:
        h = np.asarray(h, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64).reshape(-1, 1)
        if mode == HIDDEN:
            blocks.append(h)
        elif mode == HIDDEN_PLUS_PROB:
            blocks.extend((h, p))
        else:
            blocks.append(p)
    return np.hstack(blocks)


@dataclass(eq=False)
class EnsembleModel:
    normalization: NormalizationParams
    branches: list[Branch]
    fusion_mode: str
    tree: Tree
    config: PipelineConfig
    provenance: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.normalization.min.shape[0]

    def super_vector(self, X_raw) -> np.ndarray:
        Z = minmax_transform(self.normalization, X_raw)
        return fuse([b.outputs(Z) for b in self.branches], self.fusion_mode)

    def to_dict(self) -> dict:
        return {
            "schema": ENSEMBLE_SCHEMA,
            "config": self.config.to_dict(),
            "fusion_mode": self.fusion_mode,
            "normalization": {
                "min": neural._pack(self.normalization.min),
                "max": neural._pack(self.normalization.max),
            },
            "branches": [
                {"sae": neural.sae_to_dict(b.sae), "dnn": neural.mlp_to_dict(b.dnn)} for b in self.branches
            ],
            "tree": self.tree.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("schema") != ENSEMBLE_SCHEMA:
            raise UnsupportedVersion(f"unsupported ensemble schema {d.get('schema')!r}")
        norm = NormalizationParams(
            neural._unpack(d["normalization"]["min"]), neural._unpack(d["normalization"]["max"])
        )
        branches = [
            Branch(neural.sae_from_dict(b["sae"]), neural.mlp_from_dict(b["dnn"])) for b in d["branches"]
        ]
        return cls(
            norm,
            branches,
            d["fusion_mode"],
            Tree.from_dict(d["tree"]),
            PipelineConfig.from_dict(d["config"]),
            d.get("provenance", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _train_branch(i: int, subset: Dataset, config: PipelineConfig) -> Branch:
    ss = branch_seed(config.seed, i)
    init_seq, sae_seq, dnn_seq = ss.spawn(3)
    rng = np.random.default_rng(init_seq)
    sae = neural.build_sae(subset.n_features, config.sae_hidden, rng, config.dropout)
    dnn = neural.build_mlp(
        [sae.representation_dim, *config.dnn_hidden, 1], rng, dropout_rate=config.dropout
    )
    sae_seed = int(sae_seq.generate_state(1)[0])
    dnn_seed = int(dnn_seq.generate_state(1)[0])
    try:
        neural.train_autoencoder(sae, subset.features, config.epochs, config.batch_size, sae_seed, config.lr)
        codes = neural.encode(sae, subset.features)
        neural.train_mlp(
            dnn, codes, subset.labels, neural.weighted_bce(config.w_s, config.w_l),
            config.epochs, config.batch_size, dnn_seed, config.lr,
        )
    except NonFiniteLoss as exc:
        raise NonFiniteLoss(f"branch {i}: {exc}") from None
    return Branch(sae, dnn)


def train_pipeline(train: Dataset, config: PipelineConfig = PipelineConfig()) -> EnsembleModel:
    norm = minmax_fit(train)
    scaled = minmax_apply(norm, train)
    sets = make_balanced_sets(scaled, config.k, config.seed, config.partition_attacks)
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            branches = list(pool.map(lambda i: _train_branch(i, sets.subsets[i], config), range(config.k)))
    else:
        branches = [_train_branch(i, s, config) for i, s in enumerate(sets.subsets)]
    S = fuse([b.outputs(scaled.features) for b in branches], config.fusion_mode)
    tree = fit_tree(S, scaled.labels, config.tree)
    provenance = {
        "seed": config.seed,
        "config_hash": config.hash(),
        "train_fingerprint": train.fingerprint(),
        "n_train": train.n_samples,
        "n_attack": train.n_attack,
        "balanced_replacement": sets.replacement,
        "discarded_normals": sets.discarded_normals,
        "feature_names": list(train.feature_names),
    }
    return EnsembleModel(norm, branches, config.fusion_mode, tree, config, provenance)


def predict(model: EnsembleModel, data: Dataset | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels and attack probabilities for every row."""
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {X.shape}")
    prob, labels = predict_tree(model.tree, model.super_vector(X))
    return labels, prob


def evaluate(model, test: Dataset, **provenance) -> metrics.MetricsReport:
    if test.n_samples == 0:
        raise EmptyDataset("cannot evaluate on an empty test set")
    labels, _ = predict(model, test) if isinstance(model, EnsembleModel) else model.predict(test)
    scores = metrics.compute(metrics.confusion(labels, test.labels))
    prov = dict(getattr(model, "provenance", {}))
    prov.update(provenance, test_fingerprint=test.fingerprint())
    return metrics.report([scores], **prov)


# -- baselines ----------------------------------------------------------------


@dataclass(eq=False)
class ScaledModel:
    """A baseline classifier behind the same train-fitted min-max scaling."""

    normalization: NormalizationParams
    predict_scaled: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    provenance: dict = field(default_factory=dict)

    def predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        prob, labels = self.predict_scaled(minmax_transform(self.normalization, data.features))
        return labels, prob


def _dnn_baseline(Z: np.ndarray, y: np.ndarray, config: PipelineConfig):
    ss = np.random.SeedSequence([config.seed & 0xFFFFFFFF, 0xD22])
    init_seq, train_seq = ss.spawn(2)
    net = neural.build_mlp(
        [Z.shape[1], *config.dnn_hidden, 1], np.random.default_rng(init_seq), dropout_rate=config.dropout
    )
    neural.train_mlp(
        net, Z, y, neural.BCE, config.epochs, config.batch_size,
        int(train_seq.generate_state(1)[0]), config.lr,
    )

    def run(X):
        p = neural.predict(net, X).ravel()
        return p, (p >= 0.5).astype(np.int64)

    return run


def fit_method(method: str, train: Dataset, config: PipelineConfig = PipelineConfig()):
    """Train one named method; the result has ``predict(Dataset) -> (labels, probs)``."""
    if method == "proposed":
        model = train_pipeline(train, config)
        return _EnsemblePredictor(model)
    norm = minmax_fit(train)
    Z = minmax_transform(norm, train.features)
    y = train.labels
    if method == "dt":
        tree = fit_tree(Z, y, config.tree)
        run = lambda X: predict_tree(tree, X)  # noqa: E731
    elif method == "rf":
        forest = fit_random_forest(Z, y, config.rf_trees, hyper=config.tree, seed=config.seed)
        run = forest.predict
    elif method == "adaboost":
        run = fit_adaboost(Z, y, config.ada_rounds, seed=config.seed).predict
    elif method == "dnn":
        run = _dnn_baseline(Z, y, config)
    else:
        raise ConfigParse(f"unknown method {method!r}; choose from {METHODS}")
    return ScaledModel(norm, run, {"method": method, "seed": config.seed})


@dataclass(eq=False)
class _EnsemblePredictor:
    model: EnsembleModel

    @property
    def provenance(self) -> dict:
        return self.model.provenance

    def predict(self, data: Dataset):
        return predict(self.model, data)


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentReport:
    rows: list[dict]
    methods: list[str]
    ratios: list[float]
    repetitions: int
    meta: dict = field(default_factory=dict)

    def scores(self, method: str, ratio: float) -> list[metrics.Scores]:
        return [
            metrics.Scores(r["acc"], r["prec"], r["rec"], r["f1"])
            for r in self.rows
            if r["method"] == method and r["ratio"] == ratio
        ]

    def mean(self, method: str, ratio: float, metric: str) -> float:
        return metrics.aggregate(self.scores(method, ratio))[0][metric]

    def std(self, method: str, ratio: float, metric: str) -> float:
        return metrics.aggregate(self.scores(method, ratio))[1][metric]

    def table(self, metric: str, stat: str = "mean") -> list[list]:
        """Rows = ratios, columns = methods."""
        f = self.mean if stat == "mean" else self.std
        return [[ratio, *(f(m, ratio, metric) for m in self.methods)] for ratio in self.ratios]


def _ratio_seed(seed: int, rep: int, ratio: float) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, rep, int(round(ratio * 1e6))]).generate_state(1)[0])


def run_experiment(
    data: Dataset,
    plan: SplitPlan,
    config: PipelineConfig = PipelineConfig(),
    ratios: Sequence[float] = (1.0,),
    methods: Sequence[str] = METHODS,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Repeated split x imbalance ratio x method grid, scored on untouched test splits."""
    for m in methods:
        if m not in METHODS:
            raise ConfigParse(f"unknown method {m!r}; choose from {METHODS}")
    for r in ratios:
        if not 0.0 < r <= 1.0:
            raise ConfigParse(f"ratio {r} outside (0, 1]")
    rows = []
    for rep in range(plan.repetitions):
        train, test = stratified_split(data, plan, rep)
        test_fp = test.fingerprint()
        for ratio in ratios:
            sub = subsample_attacks(train, ratio, _ratio_seed(plan.seed, rep, ratio))
            for method in methods:
                model = fit_method(method, sub, replace(config, seed=config.seed + rep))
                labels, _ = model.predict(test)
                s = metrics.compute(metrics.confusion(labels, test.labels))
                rows.append(metrics.score_row(method, ratio, rep, s))
                if progress:
                    progress(f"rep={rep} ratio={ratio} method={method} f1={s.f1:.4f}")
            assert test.fingerprint() == test_fp, "test split mutated during training"
    meta = {
        "seed": plan.seed,
        "config_hash": config.hash(),
        "dataset_fingerprint": data.fingerprint(),
        "repetitions": plan.repetitions,
        "test_fraction": plan.test_fraction,
        "kfold": plan.kfold,
    }
    return ExperimentReport(rows, list(methods), [float(r) for r in ratios], plan.repetitions, meta)
