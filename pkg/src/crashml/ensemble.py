"""Random forest and least-squares boosting on top of :mod:`crashml.cart`.

Each forest tree and each boosting stage draws from its own random stream,
seeded by ``(seed, index)``, so training gives the same model whatever the
thread count or completion order.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cart import FeatureEncoding, GrowConfig, RegressionTree, grow_tree
from .data_model import Dataset, FeatureMeta
from .metrics import mae, mse

MODEL_SCHEMA_VERSION = 1


def default_forest_config(n_features: int) -> GrowConfig:
    return GrowConfig(min_leaf=5, mtry=max(1, math.ceil(n_features / 3)))


def default_stage_config() -> GrowConfig:
    return GrowConfig(min_leaf=5, max_depth=5)


def _substream(seed: int, *index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, index)])


def _check_arity(X, n_features):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected rows with {n_features} features, got shape {X.shape}")
    return X


def _features_to_json(features):
    return [{"name": f.name, "kind": f.kind, "levels": list(f.levels)} for f in features]


def _features_from_json(items):
    return tuple(FeatureMeta(d["name"], d["kind"], tuple(d["levels"])) for d in items)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    bags: tuple
    config: GrowConfig
    seed: int
    features: tuple
    n_train: int

    @property
    def k(self) -> int:
        return len(self.trees)

    @property
    def oob(self) -> tuple:
        everything = np.arange(self.n_train)
        return tuple(np.setdiff1d(everything, bag) for bag in self.bags)

    def tree_predictions(self, X) -> np.ndarray:
        X = _check_arity(X, len(self.features))
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        """Mean of the first ``n_trees`` trees (all by default)."""
        X = _check_arity(X, len(self.features))
        k = self.k if n_trees is None else n_trees
        if not 1 <= k <= self.k:
            raise ValueError(f"n_trees must lie in [1, {self.k}]")
        acc = np.zeros(X.shape[0])
        for t in self.trees[:k]:
            acc += t.predict(X)
        return acc / k

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "family": "forest",
            "seed": self.seed,
            "k_trees": self.k,
            "config": self.config.to_dict(),
            "features": _features_to_json(self.features),
            "n_train": self.n_train,
            "bags": [b.tolist() for b in self.bags],
            "trees": [t.to_dict() for t in self.trees],
        }


@dataclass(frozen=True, eq=False)
class BoostModel:
    initial_value: float
    stages: tuple
    learning_rate: float
    config: GrowConfig
    seed: int
    features: tuple
    n_train: int = 0

    @property
    def k(self) -> int:
        return len(self.stages)

    def staged_sums(self, X):
        """Yield sum of the first m stage outputs for m = 1..K."""
        X = _check_arity(X, len(self.features))
        acc = np.zeros(X.shape[0])
        for t in self.stages:
            acc = acc + t.predict(X)
            yield acc

    def predict(self, X, n_stages: int | None = None) -> np.ndarray:
        """F0 + learning_rate * (sum of the first ``n_stages`` stage trees)."""
        X = _check_arity(X, len(self.features))
        k = self.k if n_stages is None else n_stages
        if not 0 <= k <= self.k:
            raise ValueError(f"n_stages must lie in [0, {self.k}]")
        acc = np.zeros(X.shape[0])
        for t in self.stages[:k]:
            acc = acc + t.predict(X)
        return self.initial_value + self.learning_rate * acc

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "family": "boost",
            "seed": self.seed,
            "k_stages": self.k,
            "learning_rate": self.learning_rate,
            "initial_value": self.initial_value,
            "config": self.config.to_dict(),
            "features": _features_to_json(self.features),
            "n_train": self.n_train,
            "stages": [t.to_dict() for t in self.stages],
        }


def model_to_json(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":"))


def model_from_json(text: str):
    d = json.loads(text)
    if d.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {d.get('schema_version')!r}")
    config = GrowConfig(**d["config"])
    features = _features_from_json(d["features"])
    if d["family"] == "forest":
        return ForestModel(tuple(RegressionTree.from_dict(t) for t in d["trees"]),
                           tuple(np.asarray(b, dtype=np.int64) for b in d["bags"]),
                           config, d["seed"], features, d["n_train"])
    if d["family"] == "boost":
        return BoostModel(d["initial_value"],
                          tuple(RegressionTree.from_dict(t) for t in d["stages"]),
                          d["learning_rate"], config, d["seed"], features, d["n_train"])
    raise ValueError(f"unknown model family {d['family']!r}")


def predict_forest(model: ForestModel, row) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("row must be one-dimensional")
    return float(model.predict(row)[0])


def predict_boost(model: BoostModel, row) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("row must be one-dimensional")
    return float(model.predict(row)[0])


def train_forest(train: Dataset, k_trees: int = 200, config: GrowConfig | None = None,
                 seed: int = 0, threads: int = 1) -> ForestModel:
    """Bagged trees with per-node feature subsampling.

    Tree k bootstraps n rows with replacement and grows with ``config``
    (default: min_leaf 5, mtry = ceil(p / 3)), all drawn from stream (seed, k).
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    if k_trees < 1:
        raise ValueError("k_trees must be >= 1")
    config = config or default_forest_config(train.n_features)
    config.resolved_mtry(train.n_features)
    enc = FeatureEncoding(train.X, train.categorical_mask)
    n = len(train)

    def one(k):
        rng = _substream(seed, k)
        bag = rng.integers(0, n, n)
        return bag, grow_tree(None, train.y, config, rng, rows=bag, encoding=enc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(k_trees)))
    else:
        results = [one(k) for k in range(k_trees)]
    return ForestModel(tuple(t for _, t in results), tuple(b for b, _ in results), config,
                       int(seed), train.features, n)


def train_lsboost(train: Dataset, k_stages: int = 200, learning_rate: float = 1.0,
                  stage_config: GrowConfig | None = None, seed: int = 0) -> BoostModel:
    """Stagewise least-squares boosting: each stage tree fits the current residuals."""
    if len(train) == 0:
        raise ValueError("empty training set")
    if not 0 < learning_rate <= 1:
        raise ValueError(f"learning_rate must lie in (0, 1], got {learning_rate}")
    if k_stages < 0:
        raise ValueError("k_stages must be >= 0")
    config = stage_config or default_stage_config()
    mtry = config.resolved_mtry(train.n_features)
    enc = FeatureEncoding(train.X, train.categorical_mask)
    y = train.y
    f0 = float(np.mean(y))
    acc = np.zeros(len(y))
    stages = []
    for m in range(k_stages):
        residual = y - (f0 + learning_rate * acc)
        rng = _substream(seed, m) if mtry < train.n_features else None
        tree = grow_tree(None, residual, config, rng, encoding=enc)
        stages.append(tree)
        acc = acc + tree.predict(train.X)
    return BoostModel(f0, tuple(stages), float(learning_rate), config, int(seed), train.features,
                      len(train))


def boost_training_mse_path(model: BoostModel, train: Dataset) -> np.ndarray:
    """Training MSE after 0, 1, ..., K stages."""
    path = [mse(train.y, np.full(len(train), model.initial_value))]
    for s in model.staged_sums(train.X):
        path.append(mse(train.y, model.initial_value + model.learning_rate * s))
    return np.array(path)


# ---------------------------------------------------------------------------
# Variable importance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImportanceReport:
    """Per-feature permutation (%IncMSE) and node-purity importance.

    ``permutation`` is the mean out-of-bag MSE increase after permuting the
    feature, as a percent of the mean baseline out-of-bag MSE;
    ``permutation_z`` divides the mean increase by its standard error across
    trees and drives ``permutation_rank`` when there are two or more trees.
    ``purity`` is the SSE reduction of splits on the feature, averaged over
    trees. Rank 1 is most important.
    """

    features: tuple
    permutation: tuple
    permutation_se: tuple
    permutation_z: tuple
    purity: tuple
    permutation_rank: tuple = field(default=())
    purity_rank: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "features": [
                {"name": name, "pct_inc_mse": self.permutation[i],
                 "pct_inc_mse_se": self.permutation_se[i],
                 "pct_inc_mse_z": self.permutation_z[i],
                 "inc_node_purity": self.purity[i],
                 "rank_pct_inc_mse": self.permutation_rank[i],
                 "rank_inc_node_purity": self.purity_rank[i]}
                for i, name in enumerate(self.features)
            ],
        }


def _ranks(scores) -> tuple:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranks = [0] * len(scores)
    for r, i in enumerate(order, start=1):
        ranks[i] = r
    return tuple(ranks)


def variable_importance(model: ForestModel, train: Dataset, seed: int = 0) -> ImportanceReport:
    if len(train) != model.n_train or train.n_features != len(model.features):
        raise ValueError("train does not match the data the forest was fitted on")
    p = train.n_features
    k = model.k
    oobs = model.oob
    for t, oob in enumerate(oobs):
        if len(oob) == 0:
            raise ValueError(f"tree {t} has no out-of-bag rows; use more rows or more trees")
    base = np.empty(k)
    inc = np.empty((k, p))
    purity = np.zeros(p)
    for t, (tree, oob) in enumerate(zip(model.trees, oobs)):
        Xo = train.X[oob]
        yo = train.y[oob]
        base[t] = mse(yo, tree.predict(Xo))
        for j in range(p):
            Xp = Xo.copy()
            Xp[:, j] = _substream(seed, t, j).permutation(Xp[:, j])
            inc[t, j] = mse(yo, tree.predict(Xp)) - base[t]
        purity += tree.purity_by_feature()
    purity /= k
    scale = 100.0 / max(float(np.mean(base)), np.finfo(float).tiny)
    mean_inc = inc.mean(axis=0)
    if k >= 2:
        se = inc.std(axis=0, ddof=1) / math.sqrt(k)
        z = np.divide(mean_inc, se, out=np.zeros(p), where=se > 0)
    else:
        se = np.zeros(p)
        z = mean_inc.copy()
    pct = mean_inc * scale
    perm_scores = z if k >= 2 else pct
    return ImportanceReport(
        features=train.feature_names,
        permutation=tuple(float(v) for v in pct),
        permutation_se=tuple(float(v) for v in se * scale),
        permutation_z=tuple(float(v) for v in z),
        purity=tuple(float(v) for v in purity),
        permutation_rank=_ranks(list(perm_scores)),
        purity_rank=_ranks(list(purity)),
    )


# ---------------------------------------------------------------------------
# Error vs ensemble size
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityCurve:
    family: str
    points: tuple  # (k, test MAE, test MSE)

    def __post_init__(self):
        ks = [pt[0] for pt in self.points]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("tree counts must be strictly increasing")


def _check_counts(tree_counts):
    counts = [int(k) for k in tree_counts]
    if not counts:
        raise ValueError("tree_counts must be non-empty")
    if counts[0] < 1 or any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("tree_counts must be positive and strictly increasing")
    return counts


def curve_from_model(model, test: Dataset, tree_counts) -> SensitivityCurve:
    """Evaluate the first K members of an already trained ensemble for each K."""
    counts = _check_counts(tree_counts)
    if counts[-1] > model.k:
        raise ValueError(f"model has only {model.k} members")
    wanted = set(counts)
    points = []
    if isinstance(model, ForestModel):
        acc = np.zeros(len(test))
        for i, tree in enumerate(model.trees, start=1):
            acc += tree.predict(test.X)
            if i in wanted:
                pred = acc / i
                points.append((i, mae(test.y, pred), mse(test.y, pred)))
            if i == counts[-1]:
                break
        family = "forest"
    else:
        for i, s in enumerate(model.staged_sums(test.X), start=1):
            if i in wanted:
                pred = model.initial_value + model.learning_rate * s
                points.append((i, mae(test.y, pred), mse(test.y, pred)))
            if i == counts[-1]:
                break
        family = "boost"
    return SensitivityCurve(family, tuple(points))


def sensitivity_curve(train: Dataset, test: Dataset, family: str, tree_counts, seed: int = 0,
                      config: GrowConfig | None = None, learning_rate: float = 1.0,
                      threads: int = 1) -> SensitivityCurve:
    """Train once at max(tree_counts) and score truncated ensembles on ``test``."""
    counts = _check_counts(tree_counts)
    if family == "forest":
        model = train_forest(train, counts[-1], config, seed, threads)
    elif family == "boost":
        model = train_lsboost(train, counts[-1], learning_rate, config, seed)
    else:
        raise ValueError(f"unknown family {family!r}")
    return curve_from_model(model, test, counts)


def boost_importance(model: BoostModel, data: Dataset, seed: int = 0,
                     repeats: int = 10) -> ImportanceReport:
    """Importance for a boosted model, which has no out-of-bag rows.

    Permutation importance permutes each feature of ``data`` (normally the
    held-out set) ``repeats`` times; the standard error is taken across
    repeats. Purity importance sums split gains over all stages.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    p = data.n_features
    base = mse(data.y, model.predict(data.X))
    inc = np.empty((repeats, p))
    for r in range(repeats):
        for j in range(p):
            Xp = data.X.copy()
            Xp[:, j] = _substream(seed, r, j).permutation(Xp[:, j])
            inc[r, j] = mse(data.y, model.predict(Xp)) - base
    purity = np.zeros(p)
    for tree in model.stages:
        purity += tree.purity_by_feature()
    scale = 100.0 / max(base, np.finfo(float).tiny)
    mean_inc = inc.mean(axis=0)
    se = inc.std(axis=0, ddof=1) / math.sqrt(repeats) if repeats >= 2 else np.zeros(p)
    z = np.divide(mean_inc, se, out=np.zeros(p), where=se > 0) if repeats >= 2 else mean_inc
    return ImportanceReport(
        features=data.feature_names,
        permutation=tuple(float(v) for v in mean_inc * scale),
        permutation_se=tuple(float(v) for v in se * scale),
        permutation_z=tuple(float(v) for v in z),
        purity=tuple(float(v) for v in purity),
        permutation_rank=_ranks(list(z)),
        purity_rank=_ranks(list(purity)),
    )
