"""Fundamental frames, fusion of per-asset LSTM outputs, and the AUC-threshold sweep.

Rows are (asset, snapshot date) pairs. Each row carries the preprocessed
fundamental columns and the binary target computed on the asset's prices at
the most recent trading date on or before the snapshot. Fusion appends three
scalars from the asset's technical model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .labeling import HALF_WEIGHTS, target
from .lstm import SplitSpec, pond_prob
from .metrics import confusion_report
from .neural import NnConfig, fit_feedforward
from .trees import GbConfig, RfConfig, feature_importance, fit_gradient_boosting, fit_random_forest, predict_proba

log = logging.getLogger(__name__)

KEY_COLUMNS = ("asset_id", "snapshot_date")
TARGET_COLUMN = "target"
LSTM_COLUMNS = ("lstm_test_auc", "lstm_pond_prob", "lstm_diff_auc")
DEFAULT_THRESHOLDS = tuple(round(0.30 + 0.05 * k, 2) for k in range(7))
SPLITS = ("train", "test", "validation")
FAMILIES = ("rf", "gb", "nn")


def aligned_position(dates: np.ndarray, when) -> int:
    """Index of the last date ``<= when``, or -1 when every date is later."""
    return int(np.searchsorted(np.asarray(dates), np.datetime64(when, "ns"), side="right")) - 1


def fundamental_frame(snapshots, prices, h: int = 10, *, rule: str = "relative", weights=HALF_WEIGHTS) -> pd.DataFrame:
    """One row per snapshot with a defined target.

    ``prices`` maps asset id to PriceSeries. Snapshots of unknown assets, or
    whose aligned date is too close to the series end for an ``h``-bar
    target, are skipped.
    """
    if not snapshots:
        raise DataError("no fundamental snapshots")
    columns = [c for c in snapshots[0].values]
    targets = {}
    rows = []
    skipped = 0
    for s in snapshots:
        series = prices.get(s.asset_id)
        if series is None:
            skipped += 1
            continue
        if s.asset_id not in targets:
            targets[s.asset_id] = target(series, h, rule=rule, weights=weights).to_numpy()
        pos = aligned_position(series.dates.astype("datetime64[ns]"), s.snapshot_date)
        if pos < 0 or np.isnan(targets[s.asset_id][pos]):
            skipped += 1
            continue
        rows.append([s.asset_id, pd.Timestamp(s.snapshot_date), *(s.values[c] for c in columns),
                     int(targets[s.asset_id][pos])])
    if skipped:
        log.info("fundamental frame: skipped %d snapshot(s) without price or defined target", skipped)
    if not rows:
        raise DataError("no snapshot aligns with a labelled trading date")
    frame = pd.DataFrame(rows, columns=[*KEY_COLUMNS, *columns, TARGET_COLUMN])
    return frame.sort_values(list(KEY_COLUMNS), kind="mergesort").reset_index(drop=True)


def feature_columns(frame: pd.DataFrame) -> list[str]:
    return [c for c in frame.columns if c not in KEY_COLUMNS and c != TARGET_COLUMN]


@dataclass
class Fusion:
    frame: pd.DataFrame
    excluded: dict = field(default_factory=dict)  # asset_id -> reason


def fuse(frame: pd.DataFrame, summaries: dict) -> Fusion:
    """Append ``lstm_test_auc``, ``lstm_pond_prob`` and ``lstm_diff_auc`` to a fundamental frame.

    ``pond_prob`` uses the LSTM probability at the most recent prediction date
    on or before the snapshot. Assets without a usable summary, and rows
    preceding the asset's first prediction, are left out.
    """
    excluded = {}
    parts = []
    for asset, rows in frame.groupby("asset_id", sort=True):
        summary = summaries.get(asset)
        if summary is None:
            excluded[asset] = "no technical summary"
            continue
        if not summary.prob_max > summary.prob_min:
            excluded[asset] = "degenerate test distribution"
            continue
        if math.isnan(summary.test_auc):
            excluded[asset] = "undefined test AUC"
            continue
        preds = summary.predictions.sort_values("date", kind="mergesort")
        pdates = pd.to_datetime(preds["date"]).to_numpy()
        pos = np.searchsorted(pdates, rows["snapshot_date"].to_numpy(), side="right") - 1
        keep = pos >= 0
        if not keep.any():
            excluded[asset] = "no prediction on or before any snapshot"
            continue
        part = rows[keep].copy()
        probs = preds["prob"].to_numpy(float)[pos[keep]]
        part.insert(len(part.columns) - 1, LSTM_COLUMNS[0], float(summary.test_auc))
        part.insert(len(part.columns) - 1, LSTM_COLUMNS[1], np.atleast_1d(pond_prob(probs, summary)))
        part.insert(len(part.columns) - 1, LSTM_COLUMNS[2], float(summary.diff_auc))
        parts.append(part)
    for asset, why in excluded.items():
        log.info("fusion: excluded %s (%s)", asset, why)
    if not parts:
        raise DataError("fusion: no asset has both fundamentals and a technical summary")
    fused = pd.concat(parts).sort_values(list(KEY_COLUMNS), kind="mergesort").reset_index(drop=True)
    return Fusion(fused, excluded)


def split_labels(frame: pd.DataFrame, split: SplitSpec = SplitSpec()) -> np.ndarray:
    """Chronological train/test/validation labels for rows sorted by (snapshot_date, asset_id)."""
    order = np.lexsort((frame["asset_id"].to_numpy(), frame["snapshot_date"].to_numpy()))
    if not np.array_equal(order, np.arange(len(frame))):
        raise DataError("frame must be sorted by snapshot_date, asset_id")
    train_end, test_end = split.check(len(frame))
    labels = np.empty(len(frame), dtype=object)
    labels[:train_end], labels[train_end:test_end], labels[test_end:] = SPLITS
    return labels


def chronological(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.sort_values(["snapshot_date", "asset_id"], kind="mergesort").reset_index(drop=True)


@dataclass
class ModelResult:
    family: str
    model: object
    features: list
    reports: dict  # split -> EvalReport
    importance: list  # [(feature, importance)], empty for the network
    predictions: pd.DataFrame  # asset_id, snapshot_date, split, prob, target

    def metrics_frame(self) -> pd.DataFrame:
        rows = []
        for name in SPLITS:
            r = self.reports[name]
            rows.append({"split": name, **r.panel(), "n_pos": r.n_pos, "n_neg": r.n_neg})
        return pd.DataFrame(rows)

    def importance_frame(self) -> pd.DataFrame:
        out = pd.DataFrame(self.importance, columns=["feature", "importance"])
        out.insert(0, "rank", np.arange(1, len(out) + 1))
        return out


def _fit(family, X, y, features, config):
    if family == "rf":
        return fit_random_forest((X, y), config or RfConfig(), features=features)
    if family == "gb":
        return fit_gradient_boosting((X, y), config or GbConfig(), features=features)
    if family == "nn":
        net = fit_feedforward((X, y), config or NnConfig())
        net.feature_names = list(features)
        return net
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def train_model(frame: pd.DataFrame, family: str = "rf", config=None, *, features=None,
                split: SplitSpec = SplitSpec()) -> ModelResult:
    """Fit on the chronological training rows; report every split."""
    frame = chronological(frame)
    features = list(features) if features is not None else feature_columns(frame)
    labels = split_labels(frame, split)
    X = frame[features].to_numpy(float)
    y = frame[TARGET_COLUMN].to_numpy(float)
    train = labels == "train"
    Xtr = X[train]
    mean = sd = None
    if family == "nn":  # the network sees features standardised on the training rows
        mean, sd = Xtr.mean(axis=0), Xtr.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        X = (X - mean) / sd
        Xtr = X[train]
    model = _fit(family, Xtr, y[train], features, config)
    if family == "nn":
        model.input_mean, model.input_sd = mean, sd
    probs = predict_proba(model, X)
    reports = {name: confusion_report(probs[labels == name], y[labels == name]) for name in SPLITS}
    importance = feature_importance(model) if family in ("rf", "gb") else []
    preds = frame[list(KEY_COLUMNS)].copy()
    preds["split"] = labels
    preds["prob"] = probs
    preds["target"] = y.astype(int)
    return ModelResult(family, model, features, reports, importance, preds)


def train_hybrid(frame: pd.DataFrame, rf_config: RfConfig = RfConfig(), split: SplitSpec = SplitSpec()) -> ModelResult:
    missing = [c for c in LSTM_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"frame lacks fused column(s): {', '.join(missing)}")
    return train_model(frame, "rf", rf_config, split=split)


def lstm_importance(importance) -> float:
    """Summed importance of the three fused technical columns."""
    return float(sum(v for name, v in importance if name in LSTM_COLUMNS))


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    rows: int
    assets: int
    train_auc: float
    test_auc: float
    flags: tuple = ()


@dataclass
class SweepResult:
    points: list

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"threshold": p.threshold, "rows": p.rows, "train_auc": p.train_auc, "test_auc": p.test_auc}
             for p in self.points]
        )

    def at(self, threshold: float) -> SweepPoint:
        for p in self.points:
            if math.isclose(p.threshold, threshold):
                return p
        raise KeyError(threshold)


def threshold_sweep(frame: pd.DataFrame, rf_config: RfConfig = RfConfig(), thresholds=DEFAULT_THRESHOLDS,
                    split: SplitSpec = SplitSpec()) -> SweepResult:
    """Retrain the hybrid forest on rows whose asset's LSTM test AUC reaches each threshold."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("no thresholds given")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly ascending")
    points = []
    for tau in thresholds:
        kept = frame[frame[LSTM_COLUMNS[0]] >= tau]
        n_assets = int(kept["asset_id"].nunique())
        if kept.empty:
            points.append(SweepPoint(tau, 0, 0, math.nan, math.nan, ("empty subset",)))
            continue
        try:
            res = train_hybrid(kept, rf_config, split)
        except DataError as exc:
            points.append(SweepPoint(tau, len(kept), n_assets, math.nan, math.nan, (str(exc),)))
            continue
        flags = tuple(f"{name}: {f}" for name in ("train", "test") for f in res.reports[name].flags
                      if f == "auc undefined")
        points.append(SweepPoint(tau, len(kept), n_assets, res.reports["train"].auc, res.reports["test"].auc, flags))
    return SweepResult(points)


def report_rows(result: ModelResult) -> dict:
    """Train/test AUC plus the test-split probabilities needed for a bootstrap interval."""
    test = result.predictions[result.predictions["split"] == "test"]
    return {
        "train_auc": result.reports["train"].auc,
        "test_auc": result.reports["test"].auc,
        "test_scores": test["prob"].to_numpy(float),
        "test_labels": test["target"].to_numpy(int),
    }

