"""Seeded synthetic markets with a plantable, learnable signal.

Each signal-carrying asset follows a two-state trend regime (up/down) whose
durations are drawn uniformly from ``[regime_min, regime_max]`` bars. Log
returns are

    r_t = volatility * (strength * drift_scale * regime_t + eps_t)

so ``strength = 0`` gives white noise and ``strength = 1`` makes the sign of
the next return follow the sign of the previous one most of the time.
Fundamental snapshots carry a few columns correlated with the forward
10-bar log return at a configurable strength.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import ConfigError
from .market_data import (
    DROPPED_FUNDAMENTAL_COLUMNS,
    FUNDAMENTAL_COLUMNS,
    RECOMMENDATION_COLUMN,
    BenchmarkSeries,
    FundamentalSnapshot,
    PriceSeries,
)

INFORMATIVE_COLUMNS = ("potential_objective_price_pct", "var_pct_eps_1e_3m", "pct_mod_recom_positive")
DEFAULT_BENCHMARKS = ("SP500", "NASDAQ", "EUROSTOXX50")


@dataclass(frozen=True)
class SyntheticConfig:
    n_assets: int = 40
    n_bars: int = 750
    signal_strength: float = 0.8
    signal_fraction: float = 0.25
    fundamental_strength: float = 0.15
    fundamental_span: float = 0.4  # trailing fraction of the calendar with snapshots
    fundamental_horizon: int = 10
    volatility: float = 0.01
    drift_scale: float = 2.5
    regime_min: int = 25
    regime_max: int = 45
    missing_rate: float = 0.02
    start: str = "2020-01-01"
    benchmarks: tuple = DEFAULT_BENCHMARKS

    def validate(self):
        if self.n_assets < 1 or self.n_bars < 1:
            raise ConfigError("n_assets and n_bars must be positive")
        for name in ("signal_strength", "signal_fraction", "fundamental_strength", "fundamental_span",
                     "missing_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.volatility <= 0 or self.fundamental_horizon < 1:
            raise ConfigError("volatility and fundamental_horizon must be positive")
        if not 1 <= self.regime_min <= self.regime_max:
            raise ConfigError("regime durations need 1 <= regime_min <= regime_max")


class SyntheticMarket(NamedTuple):
    prices: list
    fundamentals: list
    benchmarks: list
    signal: dict  # asset_id -> planted signal strength


def asset_ids(n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"A{i:0{width}d}" for i in range(n)]


def regime_returns(n: int, strength: float, rng: np.random.Generator, *, volatility=0.01,
                   drift_scale=2.5, regime_min=15, regime_max=35) -> np.ndarray:
    """Log returns of an alternating up/down regime plus Gaussian noise."""
    regime = np.empty(n)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    pos = -int(rng.integers(0, regime_max))  # random phase at the start
    while pos < n:
        length = int(rng.integers(regime_min, regime_max + 1))
        regime[max(pos, 0):max(pos + length, 0)] = sign
        pos += length
        sign = -sign
    eps = rng.standard_normal(n)
    return volatility * (strength * drift_scale * regime + eps)


def _bars_from_returns(asset_id, dates, log_ret, rng, volatility):
    close = 100.0 * np.exp(np.cumsum(log_ret))
    prev = np.concatenate([[100.0], close[:-1]])
    opn = prev * np.exp(0.25 * volatility * rng.standard_normal(len(close)))
    top = np.maximum(opn, close)
    bottom = np.minimum(opn, close)
    high = top * np.exp(0.5 * volatility * np.abs(rng.standard_normal(len(close))))
    low = bottom * np.exp(-0.5 * volatility * np.abs(rng.standard_normal(len(close))))
    volume = np.floor(rng.lognormal(13.0, 0.4, len(close)))
    return PriceSeries(asset_id, dates, opn, high, low, close, volume)


def snapshot_dates(dates: np.ndarray, span: float) -> list[np.datetime64]:
    """1st and 15th of every month inside the trailing ``span`` of ``dates``."""
    first = dates[int(np.floor(len(dates) * (1.0 - span)))] if span < 1 else dates[0]
    last = dates[-1]
    out = []
    for month in pd.period_range(pd.Timestamp(first), pd.Timestamp(last), freq="M"):
        for day in (1, 15):
            d = np.datetime64(f"{month.year:04d}-{month.month:02d}-{day:02d}", "D")
            if first <= d <= last:
                out.append(d)
    return out


def generate_synthetic_market(config: SyntheticConfig, seed: int) -> SyntheticMarket:
    config.validate()
    root = np.random.SeedSequence(seed)
    choose_ss, price_ss, fund_ss, bench_ss = root.spawn(4)
    ids = asset_ids(config.n_assets)
    dates = pd.bdate_range(config.start, periods=config.n_bars).to_numpy().astype("datetime64[D]")

    n_signal = int(round(config.n_assets * config.signal_fraction))
    picked = set(np.random.default_rng(choose_ss).permutation(config.n_assets)[:n_signal].tolist())
    signal = {a: (config.signal_strength if i in picked else 0.0) for i, a in enumerate(ids)}

    prices = []
    for asset, ss in zip(ids, price_ss.spawn(config.n_assets)):
        rng = np.random.default_rng(ss)
        r = regime_returns(config.n_bars, signal[asset], rng, volatility=config.volatility,
                           drift_scale=config.drift_scale, regime_min=config.regime_min,
                           regime_max=config.regime_max)
        prices.append(_bars_from_returns(asset, dates, r, rng, config.volatility))

    fundamentals = _fundamentals(prices, config, np.random.default_rng(fund_ss))

    rng = np.random.default_rng(bench_ss)
    benchmarks = []
    for name in config.benchmarks:
        r = 0.0002 + 0.8 * config.volatility * rng.standard_normal(config.n_bars)
        benchmarks.append(BenchmarkSeries(name, dates, 1000.0 * np.exp(np.cumsum(r))))
    return SyntheticMarket(prices, fundamentals, benchmarks, signal)


def _fundamentals(prices, config, rng):
    cols = list(FUNDAMENTAL_COLUMNS)
    loc = rng.normal(0.0, 10.0, len(cols))
    scale = rng.uniform(0.5, 5.0, len(cols))
    h = config.fundamental_horizon
    when = snapshot_dates(prices[0].dates, config.fundamental_span) if prices else []

    rows = []
    for series in prices:
        logc = np.log(series.close)
        for d in when:
            pos = int(np.searchsorted(series.dates, d, side="right")) - 1
            fwd = (logc[pos + h] - logc[pos]) if pos + h < len(logc) else 0.0
            rows.append((series.asset_id, d, fwd))
    if not rows:
        return []
    fwd = np.array([r[2] for r in rows])
    z = (fwd - fwd.mean()) / (fwd.std() or 1.0)

    s = config.fundamental_strength
    informative = {c: cols.index(c) for c in INFORMATIVE_COLUMNS}
    snapshots = []
    for k, (asset, d, _) in enumerate(rows):
        noise = rng.standard_normal(len(cols))
        vals = loc + scale * noise
        for j in informative.values():
            vals[j] = loc[j] + scale[j] * (s * z[k] + np.sqrt(1.0 - s * s) * noise[j])
        rec_idx = cols.index(RECOMMENDATION_COLUMN)
        vals[rec_idx] = float(rng.integers(1, 6))
        missing = rng.random(len(cols)) < config.missing_rate
        for c in DROPPED_FUNDAMENTAL_COLUMNS:
            missing[cols.index(c)] |= rng.random() < 0.8
        values = {c: (np.nan if missing[j] else float(vals[j])) for j, c in enumerate(cols)}
        snapshots.append(FundamentalSnapshot(asset, d, values, values[RECOMMENDATION_COLUMN]))
    return snapshots
