"""Stacked LSTM binary classifier over sliding windows of technical features.

The network is written directly in numpy with full backpropagation through
time, so gradients can be checked against finite differences. One model is
trained per asset on the earliest 60% of its windows; the next 30% is the
test split and the final 10% the validation split. The last ``purge``
training windows are held out of fitting because their forward-looking
labels overlap the test period.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, NumericError
from .metrics import confusion_report, safe_auc
from .neural import Adam, bce_with_logits, sigmoid

log = logging.getLogger(__name__)

GRID = {"epochs": (20, 40, 60, 100), "layers": (1, 4, 8), "window": (10, 20, 30)}


@dataclass(frozen=True)
class LstmConfig:
    epochs: int = 40
    layers: int = 8
    window: int = 30
    hidden: int = 32
    learning_rate: float = 0.001
    batch_size: int = 32
    clip_norm: float | None = 5.0
    purge: int = 10  # last training windows left out; their labels look into the test split
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.layers, self.window, self.hidden, self.batch_size) < 1:
            raise ValueError("LstmConfig sizes must be >= 1")
        if self.purge < 0:
            raise ValueError("purge must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    test: float = 0.3
    validation: float = 0.1

    def __post_init__(self):
        if min(self.train, self.test, self.validation) < 0 or not math.isclose(
            self.train + self.test + self.validation, 1.0
        ):
            raise ValueError("split fractions must be non-negative and sum to 1")

    def bounds(self, n: int) -> tuple[int, int]:
        """End-exclusive (train_end, test_end); validation runs to ``n``."""
        train_end = int(round(n * self.train))
        test_end = int(round(n * (self.train + self.test)))
        return train_end, test_end

    def check(self, n: int):
        train_end, test_end = self.bounds(n)
        sizes = {"train": train_end, "test": test_end - train_end, "validation": n - test_end}
        empty = [k for k, v in sizes.items() if v < 1 and getattr(self, k) > 0]
        if empty:
            raise DataError(f"{n} windows leave the {', '.join(empty)} split empty")
        return train_end, test_end


# --------------------------------------------------------------------------- windows


@dataclass
class Windows:
    """Raw per-row features plus labels; windows are materialised on demand."""

    features: np.ndarray  # (rows, F)
    labels: np.ndarray  # (rows,), NaN where undefined
    dates: np.ndarray  # (rows,)
    window: int
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.features) < self.window:
            raise DataError(f"{len(self.features)} rows are fewer than window {self.window}")
        ends = np.arange(self.window - 1, len(self.features))
        self.end_rows = ends[~np.isnan(self.labels[ends])]
        self.y = self.labels[self.end_rows].astype(float)

    def __len__(self):
        return len(self.end_rows)

    @property
    def end_dates(self):
        return self.dates[self.end_rows]

    def with_window(self, window: int) -> Windows:
        return Windows(self.features, self.labels, self.dates, window, self.feature_names)

    def tensor(self, mean=None, sd=None, rows=None) -> np.ndarray:
        feats = self.features
        if mean is not None:
            feats = (feats - mean) / sd
        ends = self.end_rows if rows is None else self.end_rows[rows]
        view = sliding_window_view(feats, self.window, axis=0)  # (rows-w+1, F, w)
        return np.ascontiguousarray(view[ends - self.window + 1].transpose(0, 2, 1))


def make_windows(frame: pd.DataFrame, window: int, target: pd.Series) -> Windows:
    """Sliding windows over a technical frame, labelled by the target at each window's last row.

    ``target`` is aligned to ``frame`` by date; windows whose label is
    undefined are dropped.
    """
    names = [c for c in frame.columns if c != "date"]
    dates = pd.to_datetime(frame["date"]).to_numpy()
    labels = pd.Series(target.to_numpy(float), index=pd.to_datetime(target.index)).reindex(dates).to_numpy(float)
    return Windows(frame[names].to_numpy(float), labels, dates, window, names)


# --------------------------------------------------------------------------- network


class LstmNet:
    """Parameters: per layer ``W`` (in+H, 4H) and ``b`` (4H,), gate order i, f, o, g; then a logistic head."""

    def __init__(self, n_in: int, hidden: int, layers: int, rng: np.random.Generator):
        self.n_in, self.hidden, self.layers = n_in, hidden, layers
        self.params = []
        H = hidden
        for k in range(layers):
            fan_in = (n_in if k == 0 else H) + H
            bound = 1.0 / math.sqrt(fan_in)
            W = rng.uniform(-bound, bound, (fan_in, 4 * H))
            b = rng.uniform(-bound, bound, 4 * H)
            b[H:2 * H] = 1.0  # forget gate bias
            self.params += [W, b]
        bound = 1.0 / math.sqrt(H)
        self.params += [rng.uniform(-bound, bound, (H, 1)), np.zeros(1)]

    def _layer_forward(self, X, W, b):
        B, T, n_in = X.shape
        H = self.hidden
        Wx, Wh = W[:n_in], W[n_in:]
        zx = X @ Wx + b  # (B, T, 4H)
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        cache = {"h_prev": np.empty((T, B, H)), "c_prev": np.empty((T, B, H)),
                 "gates": np.empty((T, B, 4 * H)), "tc": np.empty((T, B, H))}
        for t in range(T):
            cache["h_prev"][t] = h
            cache["c_prev"][t] = c
            z = zx[:, t] + h @ Wh
            gates = np.empty_like(z)
            gates[:, :3 * H] = sigmoid(z[:, :3 * H])
            gates[:, 3 * H:] = np.tanh(z[:, 3 * H:])
            i, f, o, g = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H], gates[:, 3 * H:]
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            cache["gates"][t] = gates
            cache["tc"][t] = tc
            hs[:, t] = h
        return hs, cache

    def _layer_backward(self, X, W, dH, cache):
        B, T, n_in = X.shape
        H = self.hidden
        Wh = W[n_in:]
        dz_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            gates = cache["gates"][t]
            i, f, o, g = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H], gates[:, 3 * H:]
            tc = cache["tc"][t]
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * cache["c_prev"][t] * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
            dz[:, 3 * H:] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = dz @ Wh.T
        dz_bt = dz_all.transpose(1, 0, 2)  # (B, T, 4H)
        dWx = X.reshape(B * T, n_in).T @ dz_bt.reshape(B * T, 4 * H)
        dWh = cache["h_prev"].reshape(T * B, H).T @ dz_all.reshape(T * B, 4 * H)
        db = dz_all.sum(axis=(0, 1))
        dX = dz_bt @ W[:n_in].T
        return np.vstack([dWx, dWh]), db, dX

    def logits(self, X) -> np.ndarray:
        h = X
        for k in range(self.layers):
            h, _ = self._layer_forward(h, self.params[2 * k], self.params[2 * k + 1])
        wy, by = self.params[-2], self.params[-1]
        return (h[:, -1] @ wy + by)[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.logits(X))

    def loss_and_grads(self, X, y):
        inputs, caches = [], []
        h = X
        for k in range(self.layers):
            inputs.append(h)
            h, cache = self._layer_forward(h, self.params[2 * k], self.params[2 * k + 1])
            caches.append(cache)
        wy, by = self.params[-2], self.params[-1]
        z = (h[:, -1] @ wy + by)[:, 0]
        loss, dz = bce_with_logits(z, y)
        grads = [None] * len(self.params)
        grads[-2] = h[:, -1].T @ dz[:, None]
        grads[-1] = np.array([dz.sum()])
        dH = np.zeros_like(h)
        dH[:, -1] = dz[:, None] * wy[:, 0]
        for k in reversed(range(self.layers)):
            dW, db, dH = self._layer_backward(inputs[k], self.params[2 * k], dH, caches[k])
            grads[2 * k], grads[2 * k + 1] = dW, db
        return loss, grads


# --------------------------------------------------------------------------- training


@dataclass
class LstmModel:
    net: LstmNet
    mean: np.ndarray
    sd: np.ndarray
    config: LstmConfig
    feature_names: list
    loss_history: list = field(default_factory=list)

    def predict_proba(self, windows: Windows, rows=None) -> np.ndarray:
        X = windows.tensor(self.mean, self.sd, rows)
        if len(X) == 0:
            return np.empty(0)
        return self.net.predict_proba(X)

    def to_json(self) -> str:
        doc = {
            "config": asdict(self.config),
            "feature_names": self.feature_names,
            "n_in": self.net.n_in,
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "params": [{"shape": list(p.shape), "values": p.ravel().tolist()} for p in self.net.params],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> LstmModel:
        d = json.loads(text)
        config = LstmConfig(**d["config"])
        net = LstmNet(d["n_in"], config.hidden, config.layers, np.random.default_rng(0))
        net.params = [np.asarray(p["values"], dtype=float).reshape(p["shape"]) for p in d["params"]]
        return cls(net, np.asarray(d["mean"]), np.asarray(d["sd"]), config, d["feature_names"])


def _train_rows(windows: Windows, n_train: int) -> np.ndarray:
    """Frame rows visible to the training windows."""
    last = windows.end_rows[n_train - 1]
    return windows.features[: last + 1]


def fit_lstm(windows: Windows, config: LstmConfig = LstmConfig(), split: SplitSpec = SplitSpec()) -> LstmModel:
    """Fit on the chronological training split only (normalisation included)."""
    if windows.window != config.window:
        windows = windows.with_window(config.window)
    train_end, _ = split.check(len(windows))
    train_end -= config.purge
    if train_end < 1:
        raise DataError(f"{len(windows)} windows leave no training window after purging {config.purge}")
    train_rows = _train_rows(windows, train_end)
    mean = train_rows.mean(axis=0)
    sd = train_rows.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    X = windows.tensor(mean, sd, np.arange(train_end))
    y = windows.y[:train_end]

    init_rng, shuffle_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    net = LstmNet(X.shape[2], config.hidden, config.layers, init_rng)
    opt = Adam(net.params, lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = net.loss_and_grads(X[idx], y[idx])
            if not np.isfinite(loss):
                raise NumericError(f"LSTM loss became non-finite at epoch {epoch}")
            if config.clip_norm is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
                if norm > config.clip_norm:
                    grads = [g * (config.clip_norm / norm) for g in grads]
            opt.step(grads)
            total += loss * len(idx)
        history.append(total / len(y))
    return LstmModel(net, mean, sd, config, list(windows.feature_names), history)


@dataclass
class TechnicalModelSummary:
    asset_id: str
    train_auc: float
    test_auc: float
    diff_auc: float
    train_acc: float
    test_acc: float
    prob_min: float
    prob_max: float
    predictions: pd.DataFrame  # date, split, prob, target
    flags: tuple = ()

    def row(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "train_auc": self.train_auc,
            "test_auc": self.test_auc,
            "diff_auc": self.diff_auc,
            "prob_min": self.prob_min,
            "prob_max": self.prob_max,
        }


SUMMARY_COLUMNS = ("asset_id", "train_auc", "test_auc", "diff_auc", "prob_min", "prob_max")


def summarize(model: LstmModel, windows: Windows, split: SplitSpec = SplitSpec(), asset_id: str = "") -> TechnicalModelSummary:
    if windows.window != model.config.window:
        windows = windows.with_window(model.config.window)
    train_end, test_end = split.check(len(windows))
    fitted = max(train_end - model.config.purge, 0)
    probs = model.predict_proba(windows)
    y = windows.y
    parts = {"train": slice(0, fitted), "purged": slice(fitted, train_end), "test": slice(train_end, test_end),
             "validation": slice(test_end, None)}
    flags = []
    auc, acc = {}, {}
    for name in ("train", "test"):
        sl = parts[name]
        auc[name] = safe_auc(probs[sl], y[sl])
        if math.isnan(auc[name]):
            flags.append(f"{name} split has a single class")
        acc[name] = confusion_report(probs[sl], y[sl]).acc
    test_probs = probs[parts["test"]]
    labels = np.empty(len(y), dtype=object)
    for name, sl in parts.items():
        labels[sl] = name
    preds = pd.DataFrame({"date": pd.to_datetime(windows.end_dates), "split": labels, "prob": probs, "target": y.astype(int)})
    return TechnicalModelSummary(
        asset_id=asset_id,
        train_auc=auc["train"],
        test_auc=auc["test"],
        diff_auc=auc["train"] - auc["test"],
        train_acc=acc["train"],
        test_acc=acc["test"],
        prob_min=float(test_probs.min()),
        prob_max=float(test_probs.max()),
        predictions=preds,
        flags=tuple(flags),
    )


def pond_prob(prob, summary) -> float | np.ndarray:
    """Min-max scale a probability by the asset's test-split extremes, clamped to [0, 1]."""
    lo, hi = summary.prob_min, summary.prob_max
    if not hi > lo:
        raise DataError("degenerate test distribution: prob_max equals prob_min")
    out = np.clip((np.asarray(prob, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


class SearchOutcome(NamedTuple):
    config: LstmConfig
    summary: TechnicalModelSummary
    trials: list  # (epochs, layers, window, test_auc) in evaluation order
    model: LstmModel


def greedy_search(windows: Windows, grid=None, split: SplitSpec = SplitSpec(), base: LstmConfig = LstmConfig(),
                  asset_id: str = ""):
    """Coordinate-wise search over epochs, then layers, then window, maximising test AUC.

    Returns a SearchOutcome with the winning config, its summary and model,
    and every evaluated ``(epochs, layers, window, test_auc)`` in order.
    """
    grid = {**GRID, **(grid or {})}
    for key in ("epochs", "layers", "window"):
        if not grid[key]:
            raise ValueError(f"empty grid for {key}")
    current = base
    # defaults that fall outside a user grid are replaced by the grid's first value
    for key in ("epochs", "layers", "window"):
        if getattr(current, key) not in grid[key]:
            current = replace(current, **{key: grid[key][0]})
    cache = {}
    trials = []

    def evaluate(cfg):
        key = (cfg.epochs, cfg.layers, cfg.window)
        if key not in cache:
            try:
                model = fit_lstm(windows.with_window(cfg.window), cfg, split)
                summary = summarize(model, windows.with_window(cfg.window), split, asset_id)
            except (DataError, NumericError) as exc:
                log.info("%s: config %s failed: %s", asset_id, key, exc)
                cache[key] = None
            else:
                cache[key] = (summary, model)
                trials.append((*key, summary.test_auc))
        return cache[key][0] if cache[key] else None

    def score(s):
        return -math.inf if s is None or math.isnan(s.test_auc) else s.test_auc

    for key in ("epochs", "layers", "window"):
        best_cfg, best = None, None
        for value in grid[key]:
            cfg = replace(current, **{key: value})
            s = evaluate(cfg)
            if best_cfg is None or score(s) > score(best):
                best_cfg, best = cfg, s
        current = best_cfg
    final = cache.get((current.epochs, current.layers, current.window))
    if final is None:
        raise NumericError(f"{asset_id}: every grid candidate failed to train")
    return SearchOutcome(current, final[0], trials, final[1])
