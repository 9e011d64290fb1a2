"""Top-k equal-weight rebalancing simulation against benchmark indices.

At each rebalance date the ``top_k`` assets by their latest score (dated on
or before the rebalance) are bought in equal weights and held for ``period``
trading days. Returns are simple close-to-close; the cumulative series is the
chained product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

SCORE_SOURCES = ("hybrid", "lstm-auc")


@dataclass(frozen=True)
class BacktestConfig:
    top_k: int = 30
    period: int = 5
    score_source: str = "hybrid"
    costs_bps: float = 0.0  # charged on turnover at each rebalance
    start: str | None = None
    end: str | None = None

    def __post_init__(self):
        if self.top_k < 1 or self.period < 1:
            raise ConfigError("top_k and period must be >= 1")
        if self.score_source not in SCORE_SOURCES:
            raise ConfigError(f"score_source must be one of {SCORE_SOURCES}")
        if self.costs_bps < 0:
            raise ConfigError("costs_bps must be non-negative")


@dataclass
class BacktestResult:
    periods: pd.DataFrame  # start, end, strategy, equal_weight, <benchmarks...>
    holdings: pd.DataFrame  # date, asset_id, weight, score
    benchmarks: list
    flags: list = field(default_factory=list)

    def weekly_table(self) -> pd.DataFrame:
        """Per-period returns and cumulative returns for the strategy, the baseline and each index."""
        out = self.periods[["start", "end"]].copy()
        for name in ["strategy", "equal_weight", *self.benchmarks]:
            r = self.periods[name].to_numpy(float)
            out[name] = r
            out[f"{name}_cum"] = cumulative(r)
        return out

    @property
    def cumulative_return(self) -> float:
        c = cumulative(self.periods["strategy"].to_numpy(float))
        return float(c[-1]) if len(c) else 0.0


def cumulative(returns) -> np.ndarray:
    return np.cumprod(1.0 + np.asarray(returns, dtype=float)) - 1.0


def _calendar(prices, start, end) -> np.ndarray:
    dates = np.unique(np.concatenate([p.dates for p in prices]))
    if start is not None:
        dates = dates[dates >= np.datetime64(start, "D")]
    if end is not None:
        dates = dates[dates <= np.datetime64(end, "D")]
    return dates


def _close_on(dates, close, when):
    """Close on ``when`` exactly, or None if the series has no bar that day."""
    i = int(np.searchsorted(dates, when))
    if i < len(dates) and dates[i] == when:
        return float(close[i])
    return None


def _close_asof(dates, close, when):
    i = int(np.searchsorted(dates, when, side="right")) - 1
    return float(close[i]) if i >= 0 else None


def latest_scores(scores: pd.DataFrame, when: np.datetime64) -> pd.Series:
    """Most recent score per asset dated on or before ``when``."""
    dates = scores["date"].to_numpy().astype("datetime64[D]")
    seen = scores[dates <= when]
    if seen.empty:
        return pd.Series(dtype=float)
    seen = seen.sort_values(["asset_id", "date"], kind="mergesort")
    return seen.groupby("asset_id", sort=True)["score"].last()


def select(latest: pd.Series, top_k: int) -> list[tuple[str, float]]:
    """Highest scores first; equal scores go to the smaller asset id."""
    pairs = [(a, float(s)) for a, s in latest.items() if np.isfinite(s)]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs[:top_k]


def run_backtest(scores: pd.DataFrame, prices, benchmarks=(), config: BacktestConfig = BacktestConfig()) -> BacktestResult:
    """Simulate the strategy.

    ``scores`` has columns ``date, asset_id, score``. ``prices`` is a list of
    PriceSeries. Rebalances happen every ``period`` bars of the union trading
    calendar, starting from the first date at which any score is known.
    """
    if not len(prices):
        raise DataError("backtest needs at least one price series")
    missing = {"date", "asset_id", "score"}.difference(scores.columns)
    if missing:
        raise DataError(f"scores lack column(s): {', '.join(sorted(missing))}")
    by_id = {p.asset_id: p for p in prices}
    calendar = _calendar(prices, config.start, config.end)
    score_dates = scores["date"].to_numpy().astype("datetime64[D]")
    if len(score_dates):
        calendar = calendar[calendar >= score_dates.min()]
    if len(calendar) <= config.period:
        raise DataError("backtest window is empty: no full holding period between scores and the last price")

    flags = []
    rows, holdings = [], []
    prev_weights = {}
    for i in range(0, len(calendar) - config.period, config.period):
        t0, t1 = calendar[i], calendar[i + config.period]
        chosen = select(latest_scores(scores, t0), config.top_k)
        if not chosen:
            raise DataError(f"no scored asset at rebalance {t0}")
        if len(chosen) < config.top_k:
            flags.append(f"{t0}: only {len(chosen)} scorable asset(s) for top_k={config.top_k}")
        w = 1.0 / len(chosen)
        rets = []
        for asset, score in chosen:
            series = by_id.get(asset)
            p0 = _close_on(series.dates, series.close, t0) if series is not None else None
            p1 = _close_on(series.dates, series.close, t1) if series is not None else None
            if p0 is None or p1 is None:
                flags.append(f"{t0}..{t1}: no price for {asset}; return taken as 0")
                rets.append(0.0)
            else:
                rets.append(p1 / p0 - 1.0)
            holdings.append((pd.Timestamp(t0), asset, w, score))
        weights = {a: w for a, _ in chosen}
        turnover = sum(abs(weights.get(a, 0.0) - prev_weights.get(a, 0.0)) for a in set(weights) | set(prev_weights))
        strategy = float(np.mean(rets)) - turnover * config.costs_bps / 1e4
        prev_weights = weights

        base = []
        for series in prices:
            p0 = _close_on(series.dates, series.close, t0)
            p1 = _close_on(series.dates, series.close, t1)
            if p0 is not None and p1 is not None:
                base.append(p1 / p0 - 1.0)
        row = {"start": pd.Timestamp(t0), "end": pd.Timestamp(t1), "strategy": strategy,
               "equal_weight": float(np.mean(base)) if base else math.nan}
        for b in benchmarks:
            p0 = _close_asof(b.dates, b.close, t0)
            p1 = _close_asof(b.dates, b.close, t1)
            row[b.index_id] = p1 / p0 - 1.0 if p0 is not None and p1 is not None else math.nan
        rows.append(row)

    periods = pd.DataFrame(rows)
    hold = pd.DataFrame(holdings, columns=["date", "asset_id", "weight", "score"])
    return BacktestResult(periods, hold, [b.index_id for b in benchmarks], flags)


def write_report(result: BacktestResult, out_dir, *, figure: bool = True) -> list:
    """``backtest_weekly.csv`` (plus ``backtest.svg``) in ``out_dir``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = result.weekly_table()
    for col in ("start", "end"):
        table[col] = pd.to_datetime(table[col]).dt.strftime("%Y-%m-%d")
    csv_path = out_dir / "backtest_weekly.csv"
    table.to_csv(csv_path, index=False, lineterminator="\n")
    written = [csv_path]
    if figure:
        from .plotting import plot_backtest

        svg_path = out_dir / "backtest.svg"
        plot_backtest(result, svg_path)
        written.append(svg_path)
    return written
