"""Classification metrics, bootstrap intervals and rolling time-series CV."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

METRIC_NAMES = ("auc", "acc", "recall", "specificity", "precision", "f1", "type1", "type2")


def _check(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    y = y.astype(int)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DataError("AUC undefined: labels contain a single class")
    return s, y


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def roc_curve(scores, labels) -> RocCurve:
    """ROC points over all distinct thresholds, from (0, 0) to (1, 1)."""
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = (last_of_group + 1) - tp
    tpr = np.r_[0.0, tp / tp[-1]]
    fpr = np.r_[0.0, fp / fp[-1]]
    thresholds = np.r_[np.inf, s[last_of_group]]
    return RocCurve(fpr, tpr, thresholds)


def roc_auc(scores, labels) -> tuple[RocCurve, float]:
    """Trapezoidal area under the ROC; ties count one half, as in Mann-Whitney."""
    curve = roc_curve(scores, labels)
    auc = float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))
    return curve, auc


def auc_score(scores, labels) -> float:
    return roc_auc(scores, labels)[1]


def safe_auc(scores, labels) -> float:
    """AUC, or NaN when the labels hold a single class."""
    try:
        return auc_score(scores, labels)
    except DataError:
        return math.nan


def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row-wise Mann-Whitney AUC for a batch of (B, n) scores and labels."""
    ranks = rankdata(scores, axis=1)
    n_pos = labels.sum(axis=1)
    n_neg = labels.shape[1] - n_pos
    rank_sum = (ranks * labels).sum(axis=1)
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class EvalReport:
    auc: float
    acc: float
    recall: float
    specificity: float
    precision: float
    f1: float
    type1: float
    type2: float
    n_pos: int
    n_neg: int
    threshold: float = 0.5
    flags: tuple = ()

    def as_dict(self) -> dict:
        return asdict(self)

    def panel(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def confusion_report(scores, labels, threshold: float = 0.5) -> EvalReport:
    """All eight panel metrics with ``score >= threshold`` read as positive.

    Ratios with an empty denominator are NaN and named in ``flags``.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(int)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(f"{name} undefined")
            return math.nan
        return num / den

    recall = ratio(tp, tp + fn, "recall")
    specificity = ratio(tn, tn + fp, "specificity")
    precision = ratio(tp, tp + fp, "precision")
    if math.isnan(precision) or math.isnan(recall) or precision + recall == 0:
        f1 = math.nan if (math.isnan(precision) or math.isnan(recall)) else 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    auc = safe_auc(s, y) if len(y) else math.nan
    if math.isnan(auc):
        flags.append("auc undefined")
    return EvalReport(
        auc=auc,
        acc=(tp + tn) / len(y) if len(y) else math.nan,
        recall=recall,
        specificity=specificity,
        precision=precision,
        f1=f1,
        type1=1.0 - specificity if not math.isnan(specificity) else math.nan,
        type2=1.0 - recall if not math.isnan(recall) else math.nan,
        n_pos=tp + fn,
        n_neg=tn + fp,
        threshold=threshold,
        flags=tuple(flags),
    )


def bootstrap_aucs(scores, labels, B: int = 1000, seed: int = 0) -> np.ndarray:
    """AUCs of ``B`` class-stratified bootstrap resamples."""
    s, y = _check(scores, labels)
    pos, neg = s[y == 1], s[y == 0]
    rng = np.random.default_rng(seed)
    pos_idx = rng.integers(0, len(pos), size=(B, len(pos)))
    neg_idx = rng.integers(0, len(neg), size=(B, len(neg)))
    batch = np.concatenate([pos[pos_idx], neg[neg_idx]], axis=1)
    lab = np.concatenate([np.ones((B, len(pos))), np.zeros((B, len(neg)))], axis=1)
    return _rank_auc(batch, lab)


def bootstrap_ci(scores, labels, B: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    aucs = bootstrap_aucs(scores, labels, B, seed)
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(aucs, [tail, 1.0 - tail])
    return float(low), float(high)


def is_significant(ci) -> bool:
    """Better than chance iff the interval lies entirely above 0.5."""
    return ci[0] > 0.5


def significance_vs_chance(scores, labels, B: int = 1000, seed: int = 0, level: float = 0.95):
    ci = bootstrap_ci(scores, labels, B, level, seed)
    return is_significant(ci), ci


def diff_metrics(train: EvalReport, test: EvalReport) -> tuple[float, float]:
    """Train-minus-test gaps in AUC and accuracy."""
    return train.auc - test.auc, train.acc - test.acc


@dataclass(frozen=True)
class CvReport:
    aucs: tuple
    mean: float
    sd: float
    boundaries: tuple  # (train_start, train_end, test_end) per fold, end-exclusive
    flags: tuple = field(default=())

    @classmethod
    def from_aucs(cls, aucs, boundaries=(), flags=()):
        arr = np.asarray(aucs, dtype=float)
        ok = arr[~np.isnan(arr)]
        mean = float(ok.mean()) if len(ok) else math.nan
        sd = float(ok.std()) if len(ok) else math.nan  # population sd
        return cls(tuple(float(a) for a in arr), mean, sd, tuple(boundaries), tuple(flags))


def rolling_cv_splits(n_rows: int, folds: int = 5, train_frac: float = 0.7):
    """Expanding chronological windows; each splits 70/30 into train then test."""
    if folds < 1 or not 0 < train_frac < 1:
        raise ValueError("folds must be >= 1 and train_frac in (0, 1)")
    out = []
    for k in range(folds):
        end = int(round(n_rows * (k + 1) / folds))
        cut = int(round(end * train_frac))
        if cut < 1 or end - cut < 1:
            raise DataError(f"rolling CV: fold {k} has an empty train or test block ({n_rows} rows)")
        out.append((0, cut, end))
    return out


def rolling_cv(
    X: np.ndarray,
    y: np.ndarray,
    fit: Callable,
    folds: int = 5,
    train_frac: float = 0.7,
) -> CvReport:
    """Time-ordered CV. ``fit(X_train, y_train)`` must return a scorer ``f(X) -> probabilities``."""
    X = np.asarray(X)
    y = np.asarray(y)
    aucs, bounds, flags = [], [], []
    for k, (start, cut, end) in enumerate(rolling_cv_splits(len(y), folds, train_frac)):
        scorer = fit(X[start:cut], y[start:cut])
        auc = safe_auc(scorer(X[cut:end]), y[cut:end])
        if math.isnan(auc):
            flags.append(f"fold {k}: single-class test block")
        aucs.append(auc)
        bounds.append((start, cut, end))
    return CvReport.from_aucs(aucs, bounds, flags)
