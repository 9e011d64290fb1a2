"""Price, fundamental and benchmark ingestion.

CSV is the only on-disk format:

* prices: ``date,open,high,low,close,volume``
* fundamentals: ``asset_id,snapshot_date,<column...>`` with columns drawn from
  :data:`FUNDAMENTAL_COLUMNS`
* benchmarks: ``date,close``

Price rows with missing or malformed fields are dropped and counted.
Fundamental gaps are imputed: ``recommendation_numeric`` with 1, anything
else with 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

log = logging.getLogger(__name__)

PRICE_COLUMNS = ("date", "open", "high", "low", "close", "volume")
BENCHMARK_COLUMNS = ("date", "close")

RECOMMENDATION_COLUMN = "recommendation_numeric"
DROPPED_FUNDAMENTAL_COLUMNS = (
    "capitalization_millions",
    "float_pct_total_outstdg",
    "free_float_eur_millions",
)


def _years(stem, years=("y0", "y1", "y2", "y3")):
    return [f"{stem}_{y}" for y in years]


# snake_case names of the fundamental ratios; order is the canonical column order
FUNDAMENTAL_COLUMNS = tuple(
    # profitability
    _years("div_yld")
    + _years("margin_ebitda_pct")
    + ["roe_y1"]
    + _years("div_payout")
    + ["eps_1e_3m", "eps_1e_actual", "var_pct_eps_1e_3m"]
    + ["ebit_1e_3m", "ebit_1e_actual", "var_pct_ebit_1e_3m"]
    + ["sales_1e_3m", "sales_1e_actual", "var_pct_sales_1e_3m"]
    # valuation
    + _years("per")
    + _years("ev_ebitda")
    + _years("price_to_book")
    + _years("price_cf")
    + _years("fcf_ev_pct")
    + _years("fcf_yld_pct")
    + ["peg_fy1", "peg_fy2"]
    + ["objective_price_12m", "potential_objective_price_pct"]
    + ["target_price_3m", "var_pct_po_3m", "long_term_growth_pct"]
    # leverage
    + _years("net_debt_ebitda")
    # market and trading
    + ["market_value_eur_millions", *DROPPED_FUNDAMENTAL_COLUMNS]
    + [RECOMMENDATION_COLUMN]
    + ["pct_change_12m", "ytd_pct", "low_52w", "high_52w"]
    + ["pct_from_low_1y", "pct_from_high_1y", "price_volatility_3y"]
    + ["common_shares_outstanding", "avg_daily_volume", "volume_shares_pct"]
    + ["beta_3y_local_index", "pct_capital_traded_daily"]
    + ["diff_pct_mean_200", "diff_pct_mean_50", "diff_pct_mean_25", "mean_50_200"]
    + ["eca_num_eps", "eca_num_ebit", "ec_reco_total", "ec_reco_up"]
    + ["ec_reco_down", "ec_reco_unchanged", "pct_mod_recom_positive"]
    + ["ec_reco_pos", "ec_reco_neg", "positive_total_pct"]
)
MANDATORY_FUNDAMENTAL_COLUMNS = ("asset_id", "snapshot_date", RECOMMENDATION_COLUMN)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Daily OHLCV bars of one asset with strictly increasing dates."""

    asset_id: str
    dates: np.ndarray  # datetime64[D]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    dropped: int = field(default=0)

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close", "volume"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise DataError(f"{self.asset_id}: column {name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        if n > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError(f"{self.asset_id}: non-monotone dates")
        if n:
            bad = _invalid_bars(self.open, self.high, self.low, self.close, self.volume)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise DataError(f"{self.asset_id}: bar {dates[i]} violates OHLC invariants")

    def __len__(self):
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return self.asset_id == other.asset_id and self.to_frame().equals(other.to_frame())

    def __getitem__(self, key: slice) -> PriceSeries:
        if not isinstance(key, slice):
            raise TypeError("PriceSeries supports slice indexing only")
        return PriceSeries(
            self.asset_id,
            self.dates[key],
            self.open[key],
            self.high[key],
            self.low[key],
            self.close[key],
            self.volume[key],
        )

    @classmethod
    def from_frame(cls, asset_id: str, frame: pd.DataFrame) -> PriceSeries:
        return cls(
            asset_id,
            pd.to_datetime(frame["date"]).to_numpy().astype("datetime64[D]"),
            frame["open"].to_numpy(float),
            frame["high"].to_numpy(float),
            frame["low"].to_numpy(float),
            frame["close"].to_numpy(float),
            frame["volume"].to_numpy(float),
        )

    @classmethod
    def from_closes(cls, closes, asset_id="asset", start="2020-01-01") -> PriceSeries:
        """Flat bars (open=high=low=close) from a close sequence; handy in tests."""
        closes = np.asarray(closes, dtype=float)
        dates = pd.bdate_range(start, periods=len(closes)).to_numpy().astype("datetime64[D]")
        return cls(asset_id, dates, closes, closes, closes, closes, np.zeros(len(closes)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "date": pd.to_datetime(self.dates),
                "open": self.open,
                "high": self.high,
                "low": self.low,
                "close": self.close,
                "volume": self.volume,
            }
        )


@dataclass(frozen=True)
class FundamentalSnapshot:
    asset_id: str
    snapshot_date: np.datetime64
    values: dict
    recommendation_numeric: float = math.nan


@dataclass(frozen=True, eq=False)
class BenchmarkSeries:
    index_id: str
    dates: np.ndarray
    close: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        close = np.asarray(self.close, dtype=float)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "close", close)
        if len(dates) != len(close):
            raise DataError(f"{self.index_id}: dates and closes differ in length")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError(f"{self.index_id}: non-monotone dates")
        if not np.all(close > 0):
            raise DataError(f"{self.index_id}: non-positive close")

    def __len__(self):
        return len(self.dates)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": pd.to_datetime(self.dates), "close": self.close})


def _invalid_bars(o, h, l, c, v):
    with np.errstate(invalid="ignore"):
        return (
            ~np.isfinite(o) | ~np.isfinite(h) | ~np.isfinite(l) | ~np.isfinite(c) | ~np.isfinite(v)
            | (o <= 0) | (h <= 0) | (l <= 0) | (c <= 0) | (v < 0)
            | (l > np.minimum(o, c)) | (h < np.maximum(o, c)) | (h < l)
        )


def _read_csv(path, required) -> pd.DataFrame:
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    raw.columns = [c.strip() for c in raw.columns]
    missing = [c for c in required if c not in raw.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    return raw


def _numeric(text: pd.Series) -> pd.Series:
    """Parse decimal strings exactly (pandas' fast parser is not round-trip safe); bad cells become NaN."""

    def one(cell):
        try:
            return float(cell)
        except ValueError:
            return np.nan

    return text.str.strip().map(one).astype(float)


def ingest_prices(path, asset_id: str) -> PriceSeries:
    """Read a price CSV, dropping rows with missing or malformed fields.

    The number of dropped rows is logged and stored on ``PriceSeries.dropped``.
    Raises :class:`DataError` when nothing survives or dates are not strictly
    increasing after cleaning.
    """
    raw = _read_csv(path, PRICE_COLUMNS)
    dates = pd.to_datetime(raw["date"].str.strip(), format="ISO8601", errors="coerce")
    nums = {c: _numeric(raw[c]) for c in PRICE_COLUMNS[1:]}
    frame = pd.DataFrame({"date": dates, **nums})
    ok = frame.notna().all(axis=1).to_numpy()
    ok &= ~_invalid_bars(*(frame[c].to_numpy(float) for c in PRICE_COLUMNS[1:]))
    clean = frame[ok].reset_index(drop=True)
    dropped = int((~ok).sum())
    if clean.empty:
        raise DataError(f"{path}: zero valid rows")
    d = clean["date"].to_numpy().astype("datetime64[D]")
    if len(d) > 1 and not np.all(d[1:] > d[:-1]):
        raise DataError(f"{path}: non-monotone dates")
    if dropped:
        log.info("%s: dropped %d malformed price row(s)", asset_id, dropped)
    series = PriceSeries.from_frame(asset_id, clean)
    object.__setattr__(series, "dropped", dropped)
    return series


def ingest_benchmark(path, index_id: str) -> BenchmarkSeries:
    raw = _read_csv(path, BENCHMARK_COLUMNS)
    dates = pd.to_datetime(raw["date"].str.strip(), format="ISO8601", errors="coerce")
    close = _numeric(raw["close"])
    ok = (dates.notna() & close.notna() & (close > 0)).to_numpy()
    if not ok.any():
        raise DataError(f"{path}: zero valid rows")
    return BenchmarkSeries(index_id, dates[ok].to_numpy().astype("datetime64[D]"), close[ok].to_numpy(float))


def ingest_fundamentals(path, strict: bool = True) -> list[FundamentalSnapshot]:
    """Read and preprocess a fundamentals CSV.

    The three sparsely-populated columns in :data:`DROPPED_FUNDAMENTAL_COLUMNS`
    are removed. Missing ``recommendation_numeric`` becomes 1 (neutral);
    every other missing numeric becomes 0. With ``strict`` set, columns outside
    :data:`FUNDAMENTAL_COLUMNS` are rejected.
    """
    raw = _read_csv(path, MANDATORY_FUNDAMENTAL_COLUMNS)
    value_cols = [c for c in raw.columns if c not in ("asset_id", "snapshot_date")]
    if strict:
        unknown = [c for c in value_cols if c not in FUNDAMENTAL_COLUMNS]
        if unknown:
            raise DataError(f"{path}: unknown fundamental column(s) {', '.join(unknown)}")

    snapshots = []
    for i, row in enumerate(raw.itertuples(index=False, name=None)):
        line = i + 2  # 1-based, after the header
        rec = dict(zip(raw.columns, row))
        asset_id = rec["asset_id"].strip()
        if not asset_id:
            raise DataError(f"{path}: row {line}: empty asset_id")
        try:
            when = np.datetime64(rec["snapshot_date"].strip(), "D")
        except ValueError as exc:
            raise DataError(f"{path}: row {line}, column snapshot_date: bad date {rec['snapshot_date']!r}") from exc
        if int(str(when)[-2:]) not in (1, 15):
            raise DataError(f"{path}: row {line}: snapshot_date {when} is not the 1st or 15th")
        values = {}
        for col in value_cols:
            cell = rec[col].strip()
            if cell == "" or cell.lower() in ("nan", "na", "null"):
                values[col] = math.nan
                continue
            try:
                values[col] = float(cell)
            except ValueError as exc:
                raise DataError(f"{path}: row {line}, column {col}: unparseable number {cell!r}") from exc
            if not math.isfinite(values[col]):
                raise DataError(f"{path}: row {line}, column {col}: non-finite value {cell!r}")
        snapshots.append(FundamentalSnapshot(asset_id, when, values, values[RECOMMENDATION_COLUMN]))
    return preprocess_fundamentals(snapshots)


def preprocess_fundamentals(snapshots) -> list[FundamentalSnapshot]:
    """Drop the dead columns and impute gaps (recommendation -> 1, others -> 0)."""
    out = []
    for s in snapshots:
        values = {}
        for col, v in s.values.items():
            if col in DROPPED_FUNDAMENTAL_COLUMNS:
                continue
            if v is None or math.isnan(v):
                v = 1.0 if col == RECOMMENDATION_COLUMN else 0.0
            values[col] = float(v)
        values.setdefault(RECOMMENDATION_COLUMN, 1.0)
        out.append(FundamentalSnapshot(s.asset_id, s.snapshot_date, values, values[RECOMMENDATION_COLUMN]))
    return out


def snapshots_to_frame(snapshots) -> pd.DataFrame:
    """Long table ``asset_id, snapshot_date, <columns...>`` in canonical column order."""
    if not snapshots:
        return pd.DataFrame(columns=["asset_id", "snapshot_date"])
    present = set().union(*(s.values.keys() for s in snapshots))
    cols = [c for c in FUNDAMENTAL_COLUMNS if c in present]
    cols += sorted(present.difference(cols))
    rows = [[s.asset_id, pd.Timestamp(s.snapshot_date)] + [s.values.get(c, 0.0) for c in cols] for s in snapshots]
    return pd.DataFrame(rows, columns=["asset_id", "snapshot_date", *cols])


def write_prices_csv(series: PriceSeries, path) -> None:
    frame = series.to_frame()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame.to_csv(path, index=False, lineterminator="\n")


def write_benchmark_csv(series: BenchmarkSeries, path) -> None:
    frame = series.to_frame()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame.to_csv(path, index=False, lineterminator="\n")


def write_fundamentals_csv(snapshots, path, raw_frame: pd.DataFrame | None = None) -> None:
    frame = snapshots_to_frame(snapshots) if raw_frame is None else raw_frame.copy()
    frame["snapshot_date"] = pd.to_datetime(frame["snapshot_date"]).dt.strftime("%Y-%m-%d")
    frame.to_csv(path, index=False, lineterminator="\n")
