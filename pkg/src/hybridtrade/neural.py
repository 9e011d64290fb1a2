"""Feed-forward binary classifier (ReLU hidden layers, logistic output) in numpy."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .errors import DataError, NumericError


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def bce_with_logits(z, y):
    """Mean binary cross-entropy computed from logits, and its gradient wrt ``z``."""
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(loss), (sigmoid(z) - y) / len(y)


class Adam:
    def __init__(self, params: list, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class NnConfig:
    hidden: tuple | None = None  # None -> (n_features**2, 256)
    dropout: float = 0.3
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.hidden is not None and min(self.hidden, default=1) < 1:
            raise ValueError("hidden layer sizes must be >= 1")

    def layer_sizes(self, n_features: int) -> tuple:
        return tuple(self.hidden) if self.hidden is not None else (n_features ** 2, 256)


class FeedForwardNet:
    def __init__(self, n_in: int, hidden, rng: np.random.Generator, feature_names=None):
        sizes = [n_in, *hidden, 1]
        self.params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (a + b))
            self.params.append(rng.uniform(-limit, limit, (a, b)))
            self.params.append(np.zeros(b))
        self.feature_names = list(feature_names) if feature_names is not None else None
        self.config = None

    @property
    def n_layers(self):
        return len(self.params) // 2

    def _forward(self, X, masks=None):
        acts = [X]
        pre = []
        h = X
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W + b
            pre.append(z)
            if k < self.n_layers - 1:
                h = np.maximum(z, 0.0)
                if masks is not None:
                    h = h * masks[k]
                acts.append(h)
        return pre[-1][:, 0], acts, pre

    def loss_and_grads(self, X, y, masks=None):
        logits, acts, pre = self._forward(X, masks)
        loss, dz = bce_with_logits(logits, y)
        grads = [None] * len(self.params)
        delta = dz[:, None]
        for k in reversed(range(self.n_layers)):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = delta @ self.params[2 * k].T
                if masks is not None:
                    delta = delta * masks[k - 1]
                delta = delta * (pre[k - 1] > 0)
        return loss, grads

    def predict_proba(self, X) -> np.ndarray:
        if isinstance(X, pd.DataFrame):
            missing = [c for c in self.feature_names if c not in X.columns]
            if missing:
                raise DataError(f"frame lacks model feature(s): {', '.join(missing)}")
            X = X[self.feature_names]
        X = np.asarray(X, dtype=float)
        return sigmoid(self._forward(X)[0])  # no dropout at inference

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "feature_names": self.feature_names,
            "params": [{"shape": list(p.shape), "values": p.ravel().tolist()} for p in self.params],
        }


def fit_feedforward(frame, config: NnConfig = NnConfig(), *, target="target", features=None) -> FeedForwardNet:
    """Train with inverted dropout after each hidden layer and Adam on BCE."""
    if isinstance(frame, pd.DataFrame):
        names = list(features) if features is not None else [c for c in frame.columns if c != target]
        X = frame[names].to_numpy(float)
        y = frame[target].to_numpy(float)
    else:
        X, y = (np.asarray(a, dtype=float) for a in frame)
        names = [f"x{i}" for i in range(X.shape[1])]
    if len(y) == 0:
        raise DataError("empty training frame")
    if len(np.unique(y)) < 2:
        raise DataError("target has a single class")

    rng = np.random.default_rng(config.seed)
    hidden = config.layer_sizes(X.shape[1])
    net = FeedForwardNet(X.shape[1], hidden, rng, names)
    net.config = asdict(config)
    opt = Adam(net.params, lr=config.learning_rate)
    keep = 1.0 - config.dropout
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            masks = None
            if config.dropout > 0:
                masks = [(rng.random((len(idx), h)) < keep) / keep for h in hidden]
            loss, grads = net.loss_and_grads(X[idx], y[idx], masks)
            if not np.isfinite(loss):
                raise NumericError(f"feed-forward loss became non-finite at epoch {epoch}")
            opt.step(grads)
    return net
