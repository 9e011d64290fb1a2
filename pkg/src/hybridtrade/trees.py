"""Random Forest and Gradient Boosting classifiers built on a small CART core.

Split search scans midpoints between consecutive distinct feature values.
Ties in impurity go to the lowest feature index, then the lowest threshold.
Tree ``t`` of an ensemble draws its randomness from ``default_rng(seed + t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError


@dataclass(frozen=True)
class RfConfig:
    n_estimators: int = 170
    max_depth: int = 5
    max_samples: float = 0.4
    max_features: str = "sqrt"
    min_samples_leaf: int = 13
    min_samples_split: int = 20
    class_weight: str | None = "balanced_subsample"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.n_estimators, self.max_depth, self.min_samples_leaf, self.min_samples_split) < 1:
            raise ValueError("RfConfig counts must be >= 1")
        if not 0 < self.max_samples <= 1:
            raise ValueError("max_samples must lie in (0, 1]")
        if self.class_weight not in (None, "balanced_subsample"):
            raise ValueError("class_weight must be None or 'balanced_subsample'")


@dataclass(frozen=True)
class GbConfig:
    n_estimators: int = 130
    learning_rate: float = 0.001
    subsample: float = 0.4
    max_depth: int = 3
    max_features: str = "sqrt"
    min_samples_leaf: int = 8
    min_samples_split: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if min(self.max_depth, self.min_samples_leaf, self.min_samples_split) < 1 or self.n_estimators < 0:
            raise ValueError("GbConfig counts must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


def n_split_features(spec, n_features: int) -> int:
    if spec in (None, "all"):
        return n_features
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if spec == "log2":
        return max(1, math.ceil(math.log2(n_features)))
    if isinstance(spec, int):
        return max(1, min(spec, n_features))
    if isinstance(spec, float):
        return max(1, min(n_features, int(round(spec * n_features))))
    raise ValueError(f"bad max_features {spec!r}")


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d) -> Tree:
        ints = {"feature", "left", "right", "n_samples", "depth"}
        return cls(**{k: np.asarray(v, dtype=int if k in ints else float) for k, v in d.items()})


def _gini_split(xs, ys, ws, min_leaf):
    """Best (impurity, index) for a feature already sorted; impurity is weighted child Gini."""
    n = len(xs)
    w_cum = np.cumsum(ws)[:-1]
    w1_cum = np.cumsum(ws * ys)[:-1]
    total_w, total_w1 = w_cum[-1] + ws[-1], w1_cum[-1] + ws[-1] * ys[-1]
    wl, wr = w_cum, total_w - w_cum
    with np.errstate(divide="ignore", invalid="ignore"):
        pl = w1_cum / wl
        pr = (total_w1 - w1_cum) / wr
        cost = (wl * 2 * pl * (1 - pl) + wr * 2 * pr * (1 - pr)) / total_w
    return _pick(xs, cost, n, min_leaf)


def _mse_split(xs, ys, ws, min_leaf):
    n = len(xs)
    w_cum = np.cumsum(ws)[:-1]
    s_cum = np.cumsum(ws * ys)[:-1]
    total_w, total_s = w_cum[-1] + ws[-1], s_cum[-1] + ws[-1] * ys[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        # minimising SSE == maximising the between-group term
        cost = -(s_cum ** 2 / w_cum + (total_s - s_cum) ** 2 / (total_w - w_cum)) / total_w
    return _pick(xs, cost, n, min_leaf)


def _pick(xs, cost, n, min_leaf):
    left_count = np.arange(1, n)
    valid = (xs[1:] > xs[:-1]) & (left_count >= min_leaf) & (n - left_count >= min_leaf) & np.isfinite(cost)
    if not valid.any():
        return None
    cost = np.where(valid, cost, np.inf)
    i = int(np.argmin(cost))
    return float(cost[i]), i


def _node_impurity(y, w, criterion):
    W = w.sum()
    if criterion == "gini":
        p = (w * y).sum() / W
        return 2.0 * p * (1.0 - p)
    mean = (w * y).sum() / W
    return float((w * (y - mean) ** 2).sum() / W)


class _Builder:
    def __init__(self, criterion, max_depth, min_samples_split, min_samples_leaf, n_features_split, rng, leaf_fn):
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_split = min_samples_split
        self.min_leaf = min_samples_leaf
        self.k = n_features_split
        self.rng = rng
        self.leaf_fn = leaf_fn
        self.nodes = []

    def build(self, X, y, w) -> Tree:
        self._grow(X, y, w, np.arange(len(y)), 0)
        cols = list(zip(*self.nodes))
        names = ("feature", "threshold", "left", "right", "value", "impurity", "weight", "n_samples", "depth")
        ints = {"feature", "left", "right", "n_samples", "depth"}
        return Tree(**{n: np.asarray(c, dtype=int if n in ints else float) for n, c in zip(names, cols)})

    def _grow(self, X, y, w, idx, depth):
        node_id = len(self.nodes)
        yi, wi = y[idx], w[idx]
        imp = _node_impurity(yi, wi, self.criterion)
        self.nodes.append([-1, 0.0, -1, -1, self.leaf_fn(idx), imp, float(wi.sum()), len(idx), depth])
        n = len(idx)
        if depth >= self.max_depth or n < self.min_split or n < 2 * self.min_leaf or imp <= 1e-15:
            return node_id
        features = np.sort(self.rng.choice(X.shape[1], size=self.k, replace=False))
        split_fn = _gini_split if self.criterion == "gini" else _mse_split
        best = None
        for f in features:
            xf = X[idx, f]
            order = np.argsort(xf, kind="mergesort")
            found = split_fn(xf[order], yi[order], wi[order], self.min_leaf)
            if found is None:
                continue
            cost, i = found
            if best is None or cost < best[0]:
                xs = xf[order]
                thr = (xs[i] + xs[i + 1]) / 2.0
                if thr >= xs[i + 1]:
                    thr = xs[i]
                best = (cost, int(f), float(thr))
        if best is None:
            return node_id
        _, f, thr = best
        mask = X[idx, f] <= thr
        left = self._grow(X, y, w, idx[mask], depth + 1)
        right = self._grow(X, y, w, idx[~mask], depth + 1)
        self.nodes[node_id][:4] = [f, thr, left, right]
        return node_id


@dataclass
class TreeEnsembleModel:
    trees: list
    mode: str  # "forest" or "boosting"
    config: dict
    feature_names: list
    seed: int
    init_score: float = 0.0
    learning_rate: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trees and self.mode == "forest":
            raise ValueError("a forest needs at least one tree")
        for t in self.trees:
            if (t.feature >= len(self.feature_names)).any():
                raise ValueError("tree references a feature index out of range")

    def decision_function(self, X, n_stages=None) -> np.ndarray:
        X = _as_matrix(self, X)
        if self.mode == "forest":
            return np.mean([t.predict(X) for t in self.trees], axis=0)
        trees = self.trees if n_stages is None else self.trees[:n_stages]
        raw = np.full(len(X), self.init_score)
        for t in trees:
            raw += self.learning_rate * t.predict(X)
        return raw

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "config": self.config,
            "feature_names": list(self.feature_names),
            "seed": self.seed,
            "init_score": self.init_score,
            "learning_rate": self.learning_rate,
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> TreeEnsembleModel:
        d = json.loads(text)
        trees = [Tree.from_dict(t) for t in d.pop("trees")]
        return cls(trees=trees, **d)


def _as_matrix(model, X) -> np.ndarray:
    if isinstance(X, pd.DataFrame):
        missing = [c for c in model.feature_names if c not in X.columns]
        if missing:
            extra = [c for c in X.columns if c not in model.feature_names]
            raise DataError(
                f"feature mismatch: missing {', '.join(missing)}; extra {', '.join(map(str, extra)) or 'none'}"
            )
        X = X[model.feature_names]
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise DataError(f"expected {len(model.feature_names)} features, got shape {X.shape}")
    return X


def predict_proba(model, X, n_stages=None) -> np.ndarray:
    """Class-1 probabilities. Forest: mean of tree leaf probabilities; boosting: logistic of the additive score."""
    if getattr(model, "mode", None) == "boosting":
        return _sigmoid(model.decision_function(X, n_stages))
    if isinstance(model, TreeEnsembleModel):
        return model.decision_function(X)
    return model.predict_proba(X)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _xy(frame, target, features):
    if isinstance(frame, pd.DataFrame):
        if target not in frame.columns:
            raise DataError(f"frame has no target column {target!r}")
        names = list(features) if features is not None else [c for c in frame.columns if c != target]
        X = frame[names].to_numpy(float)
        y = frame[target].to_numpy()
    else:
        X, y = frame
        X = np.asarray(X, dtype=float)
        names = list(features) if features is not None else [f"x{i}" for i in range(X.shape[1])]
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise DataError("empty training frame")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("target must be binary 0/1")
    if len(np.unique(y)) < 2:
        raise DataError("target has a single class")
    if not np.isfinite(X).all():
        raise DataError("features contain non-finite values")
    return X, y, names


def fit_random_forest(frame, config: RfConfig = RfConfig(), *, target="target", features=None) -> TreeEnsembleModel:
    """Bagged Gini trees with per-tree balanced class weights.

    ``frame`` is a DataFrame (all non-target columns used unless ``features``
    is given) or an ``(X, y)`` pair.
    """
    X, y, names = _xy(frame, target, features)
    if len(y) < config.min_samples_split:
        raise DataError(f"need at least min_samples_split={config.min_samples_split} rows, got {len(y)}")
    k = n_split_features(config.max_features, X.shape[1])
    n_draw = max(1, int(round(config.max_samples * len(y)))) if config.bootstrap else len(y)
    trees = []
    for t in range(config.n_estimators):
        rng = np.random.default_rng(config.seed + t)
        idx = rng.integers(0, len(y), n_draw) if config.bootstrap else np.arange(len(y))
        Xb, yb = X[idx], y[idx]
        wb = np.ones(len(yb))
        if config.class_weight == "balanced_subsample":
            n1 = yb.sum()
            n0 = len(yb) - n1
            if n0 and n1:
                wb = np.where(yb == 1, len(yb) / (2.0 * n1), len(yb) / (2.0 * n0))
        builder = _Builder(
            "gini", config.max_depth, config.min_samples_split, config.min_samples_leaf, k, rng,
            leaf_fn=lambda i, yb=yb, wb=wb: float((wb[i] * yb[i]).sum() / wb[i].sum()),
        )
        trees.append(builder.build(Xb, yb, wb))
    return TreeEnsembleModel(trees, "forest", asdict(config), names, config.seed)


def fit_gradient_boosting(frame, config: GbConfig = GbConfig(), *, target="target", features=None) -> TreeEnsembleModel:
    """Stagewise logistic-loss boosting with Newton-step leaf values."""
    X, y, names = _xy(frame, target, features)
    if len(y) < config.min_samples_split:
        raise DataError(f"need at least min_samples_split={config.min_samples_split} rows, got {len(y)}")
    base = y.mean()
    init = float(np.log(base / (1.0 - base)))
    raw = np.full(len(y), init)
    k = n_split_features(config.max_features, X.shape[1])
    n_in = max(1, int(config.subsample * len(y)))
    trees = []
    for t in range(config.n_estimators):
        rng = np.random.default_rng(config.seed + t)
        idx = np.sort(rng.choice(len(y), size=n_in, replace=False)) if n_in < len(y) else np.arange(len(y))
        p = _sigmoid(raw)
        resid = y - p
        hess = p * (1.0 - p)
        r_in, h_in = resid[idx], hess[idx]

        def newton(i, r_in=r_in, h_in=h_in):
            den = h_in[i].sum()
            return float(r_in[i].sum() / den) if abs(den) > 1e-150 else 0.0

        builder = _Builder("mse", config.max_depth, config.min_samples_split, config.min_samples_leaf, k, rng, newton)
        tree = builder.build(X[idx], r_in, np.ones(len(idx)))
        raw += config.learning_rate * tree.predict(X)
        trees.append(tree)
    return TreeEnsembleModel(trees, "boosting", asdict(config), names, config.seed,
                             init_score=init, learning_rate=config.learning_rate)


def _tree_importance(tree: Tree, n_features: int) -> np.ndarray:
    imp = np.zeros(n_features)
    for node in np.flatnonzero(tree.feature >= 0):
        l, r = tree.left[node], tree.right[node]
        gain = (tree.weight[node] * tree.impurity[node]
                - tree.weight[l] * tree.impurity[l]
                - tree.weight[r] * tree.impurity[r])
        imp[tree.feature[node]] += gain
    total = imp.sum()
    return imp / total if total > 0 else imp


def feature_importance(model: TreeEnsembleModel) -> list[tuple[str, float]]:
    """Mean impurity decrease per feature, normalised to sum 1, descending (ties by name)."""
    if not model.trees:
        raise ValueError("model has no fitted trees")
    n = len(model.feature_names)
    imp = np.mean([_tree_importance(t, n) for t in model.trees], axis=0)
    total = imp.sum()
    if total > 0:
        imp = imp / total
    pairs = [(name, float(v)) for name, v in zip(model.feature_names, imp)]
    return sorted(pairs, key=lambda p: (-p[1], p[0]))
