"""Tree ensembles written from scratch: second-order gradient boosting with a
softmax objective, and a Gini random forest.

Both learners use exact greedy split search.  Candidate thresholds are the
midpoints between consecutive distinct feature values within a node; samples
with ``x < threshold`` go left.  Equal gains are resolved towards the smaller
feature index, then the smaller threshold.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .dataset import Dataset
from .imaging import N_CLASSES

log = logging.getLogger(__name__)

# a split must reduce the loss by more than this (same constant as XGBoost's kRtEps)
MIN_SPLIT_GAIN = 1e-6
# gains closer than this (relative) are treated as tied
GAIN_TIE_RTOL = 1e-9
# log-prior floor for classes absent from the training labels
PRIOR_FLOOR = 1e-6
HESS_FLOOR = 1e-16


class NotFittedError(RuntimeError):
    pass


@dataclass
class BoosterConfig:
    n_estimators: int = 1000
    max_depth: int = 25
    learning_rate: float = 0.1
    colsample_bytree: float = 0.4
    colsample_bylevel: float = 0.4
    l2_lambda: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("colsample_bytree", "colsample_bylevel"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class ForestConfig:
    n_trees: int = 500
    max_depth: int = 25
    features_per_split: Union[str, int] = "sqrt"
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if isinstance(self.features_per_split, str) and self.features_per_split != "sqrt":
            raise ValueError("features_per_split must be 'sqrt' or a positive integer")

    def n_split_features(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        return max(1, min(int(self.features_per_split), n_features))


class DecisionTree:
    """Flat node arrays.  Internal nodes have ``feature >= 0``; leaves carry ``value``."""

    def __init__(self):
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.gain: List[float] = []
        self.value: List[Optional[List[float]]] = []

    def __len__(self):
        return len(self.feature)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.gain.append(0.0)
        self.value.append(None)
        return len(self.feature) - 1

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(feat[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, feat[cur]] < thr[cur]
            node[active] = np.where(go_left, left[cur], right[cur])
            active = active[feat[node[active]] >= 0]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf value rows, shape ``(n, leaf_width)``."""
        width = len(next(v for v in self.value if v is not None))
        values = np.zeros((len(self), width))
        for i, v in enumerate(self.value):
            if v is not None:
                values[i] = v
        return values[self.apply(X)]

    def depth(self) -> int:
        def rec(n):
            if self.is_leaf(n):
                return 0
            return 1 + max(rec(self.left[n]), rec(self.right[n]))
        return rec(0) if len(self) else 0

    def used_features(self) -> set:
        return {f for f in self.feature if f >= 0}

    def to_dict(self) -> dict:
        nodes = []
        for i in range(len(self)):
            if self.is_leaf(i):
                nodes.append({"leaf": list(self.value[i])})
            else:
                nodes.append({"feat": self.feature[i], "thr": self.threshold[i],
                              "left": self.left[i], "right": self.right[i], "gain": self.gain[i]})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        t = cls()
        for nd in d["nodes"]:
            i = t._new_node()
            if "leaf" in nd:
                t.value[i] = [float(v) for v in nd["leaf"]]
            else:
                t.feature[i] = int(nd["feat"])
                t.threshold[i] = float(nd["thr"])
                t.left[i] = int(nd["left"])
                t.right[i] = int(nd["right"])
                t.gain[i] = float(nd.get("gain", 0.0))
        return t


# ---------------------------------------------------------------------------
# split search


def presort(X: np.ndarray) -> np.ndarray:
    """Stable per-column argsort of the full training matrix."""
    return np.argsort(X, axis=0, kind="stable")


def _sorted_columns(X, rows, features, presorted=None):
    """Node values sorted per feature, plus the matching global row ids.

    Ties keep ascending row order on both paths, so a presorted search gives
    the same result as sorting the node from scratch.
    """
    if presorted is None:
        Xn = X[np.ix_(rows, features)]
        order = np.argsort(Xn, axis=0, kind="stable")
        return np.take_along_axis(Xn, order, axis=0), rows[order]
    P = presorted[:, features]
    inside = np.zeros(X.shape[0], dtype=bool)
    inside[rows] = True
    pos = P.T[inside[P.T]].reshape(len(features), len(rows)).T
    return X[pos, features[None, :]], pos


def _pick(gain: np.ndarray, xs: np.ndarray, features: np.ndarray, min_gain: float):
    """Best (feature, threshold, gain) from a (positions x features) gain table."""
    best = gain.max()
    if not np.isfinite(best) or best <= min_gain:
        return None
    tied = gain >= best - GAIN_TIE_RTOL * max(1.0, abs(best))
    col = int(np.flatnonzero(tied.any(axis=0))[0])
    k = int(np.flatnonzero(tied[:, col])[0])
    thr = (xs[k, col] + xs[k + 1, col]) / 2.0
    return int(features[col]), float(thr), float(gain[k, col])


def best_newton_split(X, g, h, rows, features, l2_lambda=1.0, min_child_weight=1.0, presorted=None):
    """Exact greedy split maximizing the second-order loss reduction.

    gain = 1/2 [GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)]
    Returns ``(feature, threshold, gain)`` or ``None``.
    """
    rows = np.asarray(rows)
    features = np.sort(np.asarray(features, dtype=np.int64))
    if rows.size < 2 or features.size == 0:
        return None
    xs, pos = _sorted_columns(X, rows, features, presorted)
    gs = g[pos]
    hs = h[pos]
    GL = np.cumsum(gs, axis=0)
    HL = np.cumsum(hs, axis=0)
    G, H = GL[-1], HL[-1]
    GL, HL = GL[:-1], HL[:-1]
    GR, HR = G - GL, H - HL
    lam = l2_lambda
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
    valid = (xs[1:] > xs[:-1]) & (HL >= min_child_weight) & (HR >= min_child_weight)
    gain = np.where(valid, gain, -np.inf)
    return _pick(gain, xs, features, MIN_SPLIT_GAIN)


def best_gini_split(X, Y, w, rows, features, presorted=None):
    """Exact greedy split maximizing the weighted Gini impurity decrease.

    ``Y`` is a one-hot label matrix and ``w`` per-row sample weights (bootstrap
    multiplicities).  The decrease is expressed in weight units, i.e.
    N*gini(node) - NL*gini(left) - NR*gini(right).
    """
    rows = np.asarray(rows)
    features = np.sort(np.asarray(features, dtype=np.int64))
    if rows.size < 2 or features.size == 0:
        return None
    xs, pos = _sorted_columns(X, rows, features, presorted)
    wy = (Y * w[:, None])[pos]  # n x F x K
    CL = np.cumsum(wy, axis=0)
    C = CL[-1]
    CL = CL[:-1]
    CR = C - CL
    NL, NR, N = CL.sum(-1), CR.sum(-1), C.sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = (CL**2).sum(-1) / NL + (CR**2).sum(-1) / NR - (C**2).sum(-1) / N
    valid = (xs[1:] > xs[:-1]) & (NL > 0) & (NR > 0)
    gain = np.where(valid, gain, -np.inf)
    return _pick(gain, xs, features, 1e-12 * float(N.max()))


# ---------------------------------------------------------------------------
# tree growers


def grow_newton_tree(X, g, h, max_depth, l2_lambda=1.0, min_child_weight=1.0,
                     level_features: Optional[Callable[[int], np.ndarray]] = None,
                     presorted: Optional[np.ndarray] = None) -> DecisionTree:
    """Regression tree on gradient/hessian pairs; leaves hold ``[-G/(H+lambda)]``.

    ``level_features(depth)`` returns the candidate features at that depth
    (all features when omitted).
    """
    tree = DecisionTree()
    all_features = np.arange(X.shape[1])

    def grow(rows, depth):
        node = tree._new_node()
        split = None
        if depth < max_depth:
            feats = all_features if level_features is None else level_features(depth)
            split = best_newton_split(X, g, h, rows, feats, l2_lambda, min_child_weight, presorted)
        if split is None:
            G = g[rows].sum()
            H = h[rows].sum()
            tree.value[node] = [float(-G / (H + l2_lambda))]
            return node
        f, thr, gain = split
        mask = X[rows, f] < thr
        tree.feature[node], tree.threshold[node], tree.gain[node] = f, thr, gain
        tree.left[node] = grow(rows[mask], depth + 1)
        tree.right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return tree


def grow_gini_tree(X, y, max_depth, n_split_features, rng: np.random.Generator,
                   weights: Optional[np.ndarray] = None, n_classes: int = N_CLASSES,
                   presorted: Optional[np.ndarray] = None) -> DecisionTree:
    """CART classification tree; leaves hold weighted class distributions.

    At each node the features are visited in a random order and the first
    ``n_split_features`` that are not constant within the node are searched.
    """
    y = np.asarray(y)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    Y = np.eye(n_classes)[y]
    tree = DecisionTree()
    D = X.shape[1]

    def grow(rows, depth):
        node = tree._new_node()
        counts = (Y[rows] * w[rows, None]).sum(axis=0)
        split = None
        if depth < max_depth and np.count_nonzero(counts) > 1:
            perm = rng.permutation(D)
            Xn = X[rows]
            varying = Xn.min(axis=0) < Xn.max(axis=0)
            cand = perm[varying[perm]][:n_split_features]
            split = best_gini_split(X, Y, w, rows, cand, presorted)
        if split is None:
            tree.value[node] = (counts / counts.sum()).tolist()
            return node
        f, thr, gain = split
        mask = X[rows, f] < thr
        tree.feature[node], tree.threshold[node], tree.gain[node] = f, thr, gain
        tree.left[node] = grow(rows[mask], depth + 1)
        tree.right[node] = grow(rows[~mask], depth + 1)
        return node

    rows = np.flatnonzero(w > 0)
    grow(rows, 0)
    return tree


# ---------------------------------------------------------------------------
# ensembles


def _softmax(m: np.ndarray) -> np.ndarray:
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_loss(y: np.ndarray, proba: np.ndarray) -> float:
    p = np.clip(proba[np.arange(len(y)), y], 1e-300, None)
    return float(-np.mean(np.log(p)))


@dataclass
class TreeEnsembleModel:
    kind: str  # "boosted" | "forest"
    config: dict
    trees: List[DecisionTree]
    feature_names: List[str]
    class_count: int = N_CLASSES
    base_margin: List[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X) -> np.ndarray:
        if not self.trees:
            raise NotFittedError("model has no trees")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[-1]}")
        return X

    def decision_function(self, X) -> np.ndarray:
        """Raw per-class margins of a boosted model."""
        X = np.atleast_2d(self._check(X))
        K = self.class_count
        lr = self.config["learning_rate"]
        margin = np.tile(np.asarray(self.base_margin, dtype=np.float64), (X.shape[0], 1))
        for i, tree in enumerate(self.trees):
            margin[:, i % K] += lr * tree.predict(X)[:, 0]
        return margin

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.kind == "boosted":
            proba = _softmax(self.decision_function(X))
        else:
            proba = np.zeros((X.shape[0], self.class_count))
            for tree in self.trees:
                proba += tree.predict(X)
            proba /= len(self.trees)
        return proba[0] if single else proba

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def used_features(self) -> set:
        out = set()
        for t in self.trees:
            out |= t.used_features()
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "class_count": self.class_count,
            "feature_names": self.feature_names,
            "base_margin": self.base_margin,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsembleModel":
        return cls(
            kind=d["kind"],
            config=d["config"],
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            feature_names=list(d["feature_names"]),
            class_count=int(d.get("class_count", N_CLASSES)),
            base_margin=[float(v) for v in d.get("base_margin", [])],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "TreeEnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def feature_importance(model: TreeEnsembleModel) -> np.ndarray:
    """Total split gain per feature over every tree, normalized to sum to 1.

    A model without any split gets all-zero scores.
    """
    if not model.trees:
        raise NotFittedError("model has no trees")
    total = np.zeros(model.n_features)
    for tree in model.trees:
        for f, gain in zip(tree.feature, tree.gain):
            if f >= 0:
                total[f] += gain
    s = total.sum()
    return total / s if s > 0 else total


def _validate_training(train: Dataset):
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    if not np.all(np.isfinite(train.X)):
        raise ValueError("features contain NaN or infinite values")


def _sample(rng: np.random.Generator, pool: np.ndarray, frac: float) -> np.ndarray:
    if frac >= 1.0:
        return pool
    k = max(1, math.ceil(frac * len(pool)))
    return np.sort(rng.choice(pool, size=k, replace=False))


def train_boosted(train: Dataset, cfg: BoosterConfig = BoosterConfig(),
                  callback: Optional[Callable[[int, np.ndarray], None]] = None) -> TreeEnsembleModel:
    """Newton boosting of one regression tree per class per round (softmax loss).

    Margins start at the clipped log class priors.  Feature subsets are drawn
    per tree from ``(seed, round, class)`` and re-drawn per depth level from
    ``(seed, round, class, depth)``.  ``callback(round, proba)`` sees the
    training probabilities after every round.
    """
    _validate_training(train)
    X, y = train.X, train.y
    n, D = X.shape
    K = N_CLASSES
    prior = np.bincount(y, minlength=K) / n
    base = np.log(np.maximum(prior, PRIOR_FLOOR))
    margin = np.tile(base, (n, 1))
    onehot = np.eye(K)[y]
    all_features = np.arange(D)
    ps = presort(X)
    trees = []
    for rnd in range(cfg.n_estimators):
        p = _softmax(margin)
        step = np.zeros_like(margin)
        for c in range(K):
            g = p[:, c] - onehot[:, c]
            h = np.maximum(2.0 * p[:, c] * (1.0 - p[:, c]), HESS_FLOOR)
            tree_feats = _sample(np.random.default_rng([cfg.seed, rnd, c]), all_features, cfg.colsample_bytree)
            level_cache = {}

            def level_features(depth, rnd=rnd, c=c, tree_feats=tree_feats, cache=level_cache):
                if depth not in cache:
                    rng = np.random.default_rng([cfg.seed, rnd, c, depth + 1])
                    cache[depth] = _sample(rng, tree_feats, cfg.colsample_bylevel)
                return cache[depth]

            tree = grow_newton_tree(X, g, h, cfg.max_depth, cfg.l2_lambda, cfg.min_child_weight, level_features, ps)
            step[:, c] = tree.predict(X)[:, 0]
            trees.append(tree)
        margin = margin + cfg.learning_rate * step
        if callback is not None:
            callback(rnd, _softmax(margin))
        if log.isEnabledFor(logging.DEBUG) and (rnd + 1) % 50 == 0:
            log.debug("round %d: train log-loss %.6f", rnd + 1, log_loss(y, _softmax(margin)))
    return TreeEnsembleModel("boosted", asdict(cfg), trees, list(train.feature_names),
                             K, base.tolist())


def _forest_tree(X, y, cfg: ForestConfig, index: int, presorted=None) -> DecisionTree:
    rng = np.random.default_rng([cfg.seed, index])
    n = len(y)
    if cfg.bootstrap:
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
    else:
        weights = np.ones(n)
    return grow_gini_tree(X, y, cfg.max_depth, cfg.n_split_features(X.shape[1]), rng, weights,
                          presorted=presorted)


_POOL_DATA = {}


def _pool_init(X, y, cfg):
    _POOL_DATA["args"] = (X, y, cfg)


def _pool_tree(index):
    X, y, cfg = _POOL_DATA["args"]
    return _forest_tree(X, y, cfg, index).to_dict()


def train_forest(train: Dataset, cfg: ForestConfig = ForestConfig(), workers: int = 1) -> TreeEnsembleModel:
    """Bootstrap-aggregated CART trees; tree ``i`` draws from ``(seed, i)`` only,
    so the forest does not depend on the worker count."""
    _validate_training(train)
    X, y = train.X, train.y
    if workers > 1 and cfg.n_trees > 1:
        with ProcessPoolExecutor(workers, initializer=_pool_init, initargs=(X, y, cfg)) as ex:
            trees = [DecisionTree.from_dict(d) for d in ex.map(_pool_tree, range(cfg.n_trees), chunksize=8)]
    else:
        trees = [_forest_tree(X, y, cfg, i) for i in range(cfg.n_trees)]
    return TreeEnsembleModel("forest", asdict(cfg), trees, list(train.feature_names), N_CLASSES, [])


def predict_proba(model: TreeEnsembleModel, x) -> np.ndarray:
    return model.predict_proba(x)


def train_model(train: Dataset, kind: str, booster: Optional[BoosterConfig] = None,
                forest: Optional[ForestConfig] = None, workers: int = 1) -> TreeEnsembleModel:
    if kind == "boosted":
        return train_boosted(train, booster or BoosterConfig())
    if kind == "forest":
        return train_forest(train, forest or ForestConfig(), workers)
    raise ValueError(f"unknown model kind {kind!r}")
