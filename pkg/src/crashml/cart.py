"""CART regression trees (squared-error splitting) used by both ensembles.

Trees are stored as flat node arrays. Node 0 is the root; an internal node
sends a row left when its numeric value is ``<= threshold`` or its
categorical level is in the node's left level set. A categorical level that
never reached the node during training follows the child that received more
training rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class GrowConfig:
    """Tree growth controls.

    ``mtry`` is the number of candidate features drawn per node (all features
    when None); ``max_depth`` None means unlimited.
    """

    min_leaf: int = 5
    max_depth: int | None = None
    mtry: int | None = None
    min_gain: float = 0.0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_gain < 0:
            raise ValueError("min_gain must be >= 0")

    def resolved_mtry(self, n_features: int) -> int:
        if self.mtry is None:
            return n_features
        if self.mtry > n_features:
            raise ValueError(f"mtry={self.mtry} exceeds the {n_features} available features")
        return self.mtry

    def to_dict(self) -> dict:
        return {"min_leaf": self.min_leaf, "max_depth": self.max_depth, "mtry": self.mtry,
                "min_gain": self.min_gain}


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    gain: float
    threshold: float | None = None
    left_levels: tuple | None = None
    right_levels: tuple | None = None

    def goes_left(self, x) -> bool:
        if self.threshold is not None:
            return x <= self.threshold
        return int(x) in self.left_levels


class FeatureEncoding:
    """Rank codes of every feature over a fixed training matrix."""

    def __init__(self, X, categorical=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        n, p = X.shape
        is_cat = np.zeros(p, dtype=bool) if categorical is None else np.asarray(categorical, bool)
        if is_cat.shape != (p,):
            raise ValueError("categorical mask must have one entry per feature")
        codes = np.empty((n, p), dtype=np.int64)
        n_codes = np.empty(p, dtype=np.int64)
        distinct = []
        for f in range(p):
            col = X[:, f]
            if is_cat[f]:
                if np.any(col < 0) or np.any(col != np.floor(col)):
                    raise ValueError(f"categorical feature {f} must hold non-negative level codes")
                codes[:, f] = col.astype(np.int64)
                n_codes[f] = int(col.max()) + 1 if n else 1
                if n_codes[f] > _kernels.MAX_LEVELS:
                    raise ValueError(f"categorical feature {f} has more than 64 levels")
                distinct.append(np.zeros(0))
            else:
                uniq, inv = np.unique(col, return_inverse=True)
                codes[:, f] = inv.reshape(-1)
                n_codes[f] = len(uniq)
                distinct.append(uniq)
        width = max([len(d) for d in distinct] + [1])
        values = np.full((p, width), np.inf)
        for f, d in enumerate(distinct):
            values[f, :len(d)] = d
        self.X = X
        self.codes = codes
        self.n_codes = n_codes
        self.values = values
        self.is_cat = is_cat

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]


def _candidate(f, thr, lm, rm, gain, is_cat) -> SplitCandidate:
    if is_cat[f]:
        return SplitCandidate(int(f), float(gain), None, _levels(lm), _levels(rm))
    return SplitCandidate(int(f), float(gain), float(thr))


def _levels(mask) -> tuple:
    mask = int(mask)
    return tuple(i for i in range(_kernels.MAX_LEVELS) if mask >> i & 1)


def best_split(X, y, candidate_features=None, categorical=None, min_leaf: int = 1,
               min_gain: float = 0.0) -> SplitCandidate | None:
    """Split of all rows of ``X`` maximising the reduction in squared error.

    Numeric thresholds are midpoints between consecutive distinct values.
    Categorical features with up to 12 levels present try every
    bipartition; wider ones try the prefixes of their levels ordered by mean
    response.
    Returns None when no split has gain above ``min_gain`` with both sides
    holding at least ``min_leaf`` rows.
    """
    enc = FeatureEncoding(X, categorical)
    y = np.asarray(y, dtype=np.float64)
    if len(y) != enc.codes.shape[0] or len(y) == 0:
        raise ValueError("X and y must be non-empty with matching lengths")
    if candidate_features is None:
        feats = np.arange(enc.n_features)
    else:
        feats = np.unique(np.asarray(candidate_features, dtype=np.int64))
        if len(feats) == 0:
            raise ValueError("candidate_features must be non-empty")
    if y.min() == y.max():
        return None
    idx = np.arange(len(y), dtype=np.int64)
    sse = float(np.sum((y - y.mean()) ** 2))
    f, thr, lm, rm, gain, _ = _kernels.search(
        enc.codes, y, idx, 0, len(y), feats, enc.n_codes, enc.values, enc.is_cat,
        min_leaf, float(min_gain), _kernels.TIE_RTOL * sse)
    if f < 0:
        return None
    return _candidate(f, thr, lm, rm, gain, enc.is_cat)


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left_mask: np.ndarray
    right_mask: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n: np.ndarray
    sse: np.ndarray
    gain: np.ndarray
    is_cat: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.is_cat)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def split(self, node: int) -> SplitCandidate | None:
        f = int(self.feature[node])
        if f < 0:
            return None
        return _candidate(f, self.threshold[node], self.left_mask[node], self.right_mask[node],
                          self.gain[node], self.is_cat)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected rows with {self.n_features} features, got shape {X.shape}")
        return _kernels.predict(X, self.feature, self.threshold, self.left_mask, self.right_mask,
                                self.default_left, self.left, self.right, self.value, self.is_cat)

    def purity_by_feature(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        internal = self.feature >= 0
        np.add.at(out, self.feature[internal], self.gain[internal])
        return out

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            node = {"id": i, "n": int(self.n[i]), "value": float(self.value[i]),
                    "sse": float(self.sse[i])}
            f = int(self.feature[i])
            if f < 0:
                node["kind"] = "leaf"
            else:
                node.update(kind="split", feature=f, gain=float(self.gain[i]),
                            left=int(self.left[i]), right=int(self.right[i]))
                if self.is_cat[f]:
                    node.update(left_levels=list(_levels(self.left_mask[i])),
                                right_levels=list(_levels(self.right_mask[i])),
                                unseen="left" if self.default_left[i] else "right")
                else:
                    node["threshold"] = float(self.threshold[i])
            nodes.append(node)
        return {"categorical": [bool(c) for c in self.is_cat], "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        nodes = d["nodes"]
        k = len(nodes)
        arr = dict(
            feature=np.full(k, -1, np.int64), threshold=np.full(k, np.nan),
            left_mask=np.zeros(k, np.uint64), right_mask=np.zeros(k, np.uint64),
            default_left=np.zeros(k, np.bool_), left=np.full(k, -1, np.int64),
            right=np.full(k, -1, np.int64), value=np.zeros(k), n=np.zeros(k, np.int64),
            sse=np.zeros(k), gain=np.zeros(k))
        for node in nodes:
            i = node["id"]
            arr["value"][i] = node["value"]
            arr["n"][i] = node["n"]
            arr["sse"][i] = node["sse"]
            if node["kind"] == "split":
                arr["feature"][i] = node["feature"]
                arr["gain"][i] = node["gain"]
                arr["left"][i] = node["left"]
                arr["right"][i] = node["right"]
                if "threshold" in node:
                    arr["threshold"][i] = node["threshold"]
                else:
                    arr["left_mask"][i] = sum(1 << lv for lv in node["left_levels"])
                    arr["right_mask"][i] = sum(1 << lv for lv in node["right_levels"])
                    arr["default_left"][i] = node["unseen"] == "left"
        return cls(is_cat=np.array(d["categorical"], dtype=bool), **arr)


def grow_tree(X, y, config: GrowConfig = GrowConfig(), rng=None, categorical=None, rows=None,
              encoding: FeatureEncoding | None = None) -> RegressionTree:
    """Grow a regression tree by greedy recursive binary splitting.

    Parameters
    ----------
    X, y : array_like
        Training matrix and responses. Ignored in favour of ``encoding.X``
        for the matrix when an encoding is supplied.
    rng : numpy.random.Generator, optional
        Source of the per-node feature draws; only consulted when
        ``config.mtry`` is below the feature count.
    rows : array_like of int, optional
        Row multiset to train on (e.g. a bootstrap sample); all rows by default.
    """
    enc = encoding if encoding is not None else FeatureEncoding(X, categorical)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (enc.codes.shape[0],):
        raise ValueError("y must have one value per row of X")
    sample = np.arange(len(y), dtype=np.int64) if rows is None else np.asarray(rows, np.int64)
    if len(sample) == 0:
        raise ValueError("cannot grow a tree on zero rows")
    p = enc.n_features
    mtry = config.resolved_mtry(p)
    if mtry < p:
        if rng is None:
            raise ValueError("an rng is required when mtry is below the feature count")
        uniforms = rng.random((2 * len(sample) + 1) * mtry)
    else:
        uniforms = np.zeros(0)
    max_depth = -1 if config.max_depth is None else config.max_depth
    out = _kernels.grow(enc.codes, y, sample, enc.n_codes, enc.values, enc.is_cat,
                        config.min_leaf, max_depth, mtry, float(config.min_gain), uniforms)
    (feature, threshold, lmask, rmask, dleft, left, right, value, n, sse, gain, _) = out
    return RegressionTree(feature, threshold, lmask, rmask, dleft, left, right, value, n, sse,
                          gain, enc.is_cat.copy())


def predict_tree(tree: RegressionTree, row) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] != tree.n_features:
        raise ValueError(f"row has {row.size} values, tree expects {tree.n_features}")
    return float(tree.predict(row[None, :])[0])
