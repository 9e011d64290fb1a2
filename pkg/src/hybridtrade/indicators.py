"""Technical indicators over a :class:`PriceSeries`.

Every indicator returns values aligned to the input bars, with NaN marking
positions whose warm-up window is not yet filled.

ADX is built from raw high/low differences smoothed by a simple loop, and SQZ
is the short/long SMA spread over a scaled comparison SMA. Neither matches
TA-lib output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .market_data import PriceSeries

KINDS = ("sma", "ema", "ichimoku", "adx", "rsi", "macd", "williams_r", "kdj", "sqz", "bollinger", "atr")

DEFAULT_PARAMS = {
    "sma": {"n": 20},
    "ema": {"n": 20},
    "ichimoku": {"n": 9, "m": 26, "p": 52},
    "adx": {"n": 14},
    "rsi": {"n": 14},
    "macd": {"n": 12, "m": 26, "p": 9},
    "williams_r": {"n": 14},
    "kdj": {"n": 14, "d": 3},
    "sqz": {"n": 20, "m": 50, "p": 200, "q": 2.0},
    "bollinger": {"n": 20, "k": 2.0},
    "atr": {"n": 14},
}


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class IndicatorSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown indicator {self.kind!r}")
        merged = {**DEFAULT_PARAMS[self.kind], **self.params}
        unknown = set(merged) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind}: unknown parameter(s) {sorted(unknown)}")
        for key in ("n", "m", "p", "d"):
            if key in merged and (int(merged[key]) != merged[key] or merged[key] < 1):
                raise ValueError(f"{self.kind}: window {key} must be a positive integer")
        for key in ("k", "q"):
            if key in merged:
                merged[key] = float(merged[key])
                if merged[key] <= 0:
                    raise ValueError(f"{self.kind}: {key} must be positive")
        object.__setattr__(self, "params", merged)

    @property
    def label(self) -> str:
        return f"{self.kind.upper()}({','.join(_fmt(v) for v in self.params.values())})"

    def compute(self, series: PriceSeries) -> pd.DataFrame:
        out = _FUNCS[self.kind](series, **self.params)
        return out.to_frame() if isinstance(out, pd.Series) else out


def default_specs() -> list[IndicatorSpec]:
    return (
        [IndicatorSpec("sma", {"n": n}) for n in (20, 55)]
        + [IndicatorSpec("ema", {"n": n}) for n in (20, 55, 200)]
        + [IndicatorSpec("ichimoku"), IndicatorSpec("adx")]
        + [IndicatorSpec("rsi", {"n": n}) for n in (6, 12, 14, 24)]
        + [IndicatorSpec(k) for k in ("macd", "williams_r", "kdj", "sqz", "bollinger", "atr")]
    )


DEFAULT_PERCENT = (("close", "sma_20"), ("close", "sma_55"), ("close", "ema_200"))
# the lagging span reads closes m bars ahead, which is look-ahead for a predictor
DEFAULT_EXCLUDE = ("cs_26",)

# column prefixes measured in price units (levels) or price differences
PRICE_LEVEL_PREFIXES = ("sma_", "ema_", "its_", "iks_", "isa_", "isb_", "bbl_", "bbm_", "bbu_")
PRICE_DIFF_PREFIXES = ("macd", "atr_")


def _index(series):
    return pd.DatetimeIndex(series.dates, name="date")


def _rolling(x: np.ndarray, n: int, fn) -> np.ndarray:
    out = np.full(len(x), np.nan)
    if n <= len(x):
        out[n - 1:] = fn(sliding_window_view(x, n), axis=1)
    return out


def _ema_array(x: np.ndarray, n: int) -> np.ndarray:
    """EMA seeded with the SMA of the first ``n`` defined values."""
    out = np.full(len(x), np.nan)
    defined = np.flatnonzero(~np.isnan(x))
    if len(defined) < n:
        return out
    start = defined[0]
    seed_at = start + n - 1
    alpha = 2.0 / (n + 1)
    prev = x[start:seed_at + 1].mean()
    out[seed_at] = prev
    for i in range(seed_at + 1, len(x)):
        prev = prev + alpha * (x[i] - prev)
        out[i] = prev
    return out


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    """Positive ``k`` moves values forward (later positions)."""
    out = np.full(len(x), np.nan)
    if k >= 0:
        if k < len(x):
            out[k:] = x[:len(x) - k]
    elif -k < len(x):
        out[:k] = x[-k:]
    return out


def sma(series: PriceSeries, n: int = 20) -> pd.Series:
    if n < 1:
        raise ValueError("n must be >= 1")
    return pd.Series(_rolling(series.close, n, np.mean), index=_index(series), name=f"sma_{n}")


def ema(series: PriceSeries, n: int = 20) -> pd.Series:
    if n < 1:
        raise ValueError("n must be >= 1")
    return pd.Series(_ema_array(series.close, n), index=_index(series), name=f"ema_{n}")


def ichimoku(series: PriceSeries, n: int = 9, m: int = 26, p: int = 52) -> pd.DataFrame:
    if not n <= m <= p:
        raise ValueError("ichimoku requires n <= m <= p")

    def mid(w):
        return (_rolling(series.high, w, np.max) + _rolling(series.low, w, np.min)) / 2.0

    its, iks, isb_raw = mid(n), mid(m), mid(p)
    lead = p // 2
    return pd.DataFrame(
        {
            f"its_{n}": its,
            f"iks_{m}": iks,
            f"isa_{n}_{m}_{p}": _shift((its + iks) / 2.0, lead),
            f"isb_{p}": _shift(isb_raw, lead),
            f"cs_{m}": _shift(series.close, -m),
        },
        index=_index(series),
    )


def adx(series: PriceSeries, n: int = 14) -> pd.Series:
    if n < 1 or len(series) < 2:
        raise ValueError("adx requires n >= 1 and at least two bars")
    h, l = series.high, series.low
    di_plus = h[1:] - h[:-1]
    di_minus = l[:-1] - l[1:]
    denom = np.abs(di_plus + di_minus)
    with np.errstate(divide="ignore", invalid="ignore"):
        dx = np.where(denom == 0, 0.0, np.abs(di_plus - di_minus) / denom)
    out = np.full(len(series), np.nan)
    prev = dx[0]
    out[1] = prev
    for t in range(1, len(dx)):
        prev = (prev * (n - 1) + dx[t]) / n
        out[t + 1] = prev
    return pd.Series(out, index=_index(series), name=f"adx_{n}")


def rsi(series: PriceSeries, n: int = 14) -> pd.Series:
    if n < 1:
        raise ValueError("n must be >= 1")
    diff = np.diff(series.close)
    out = np.full(len(series), np.nan)
    if n <= len(diff):
        win = sliding_window_view(diff, n)
        gain = np.where(win > 0, win, 0.0).mean(axis=1)
        loss = np.where(win < 0, -win, 0.0).mean(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 100.0 - 100.0 / (1.0 + gain / loss)
        val = np.where(loss == 0, np.where(gain > 0, 100.0, 50.0), val)
        out[n:] = val
    return pd.Series(out, index=_index(series), name=f"rsi_{n}")


def macd(series: PriceSeries, n: int = 12, m: int = 26, p: int = 9) -> pd.DataFrame:
    if not n < m:
        raise ValueError("macd requires n < m")
    line = _ema_array(series.close, n) - _ema_array(series.close, m)
    signal = _ema_array(line, p)
    return pd.DataFrame(
        {f"macd_{n}_{m}_{p}": line, f"macds_{n}_{m}_{p}": signal, f"macdh_{n}_{m}_{p}": line - signal},
        index=_index(series),
    )


def _range_position(series, n):
    hi = _rolling(series.high, n, np.max)
    lo = _rolling(series.low, n, np.min)
    return hi, lo, hi - lo


def williams_r(series: PriceSeries, n: int = 14) -> pd.Series:
    if n < 1:
        raise ValueError("n must be >= 1")
    hi, _, rng = _range_position(series, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(rng == 0, 0.0, 100.0 * (hi - series.close) / rng)
    val[np.isnan(rng)] = np.nan
    return pd.Series(val, index=_index(series), name=f"willr_{n}")


def kdj(series: PriceSeries, n: int = 14, d: int = 3) -> pd.DataFrame:
    if n < 1 or d < 1:
        raise ValueError("kdj requires n >= 1 and d >= 1")
    _, lo, rng = _range_position(series, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(rng == 0, 50.0, 100.0 * (series.close - lo) / rng)
    k[np.isnan(rng)] = np.nan
    dline = np.full(len(k), np.nan)
    first = n - 1
    if first + d <= len(k):
        dline[first + d - 1:] = sliding_window_view(k[first:], d).mean(axis=1)
    return pd.DataFrame(
        {f"k_{n}_{d}": k, f"d_{n}_{d}": dline, f"j_{n}_{d}": 3.0 * k - 2.0 * dline},
        index=_index(series),
    )


def sqz(series: PriceSeries, n: int = 20, m: int = 50, p: int = 200, q: float = 2.0) -> pd.Series:
    if not (n < m and p >= m and q > 0):
        raise ValueError("sqz requires n < m <= p and q > 0")
    c = series.close
    long_ = _rolling(c, p, np.mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (_rolling(c, n, np.mean) - _rolling(c, m, np.mean)) / (long_ * q)
    val[long_ == 0] = np.nan
    return pd.Series(val, index=_index(series), name=f"sqz_{n}_{m}_{p}_{_fmt(float(q))}")


def bollinger(series: PriceSeries, n: int = 20, k: float = 2.0) -> pd.DataFrame:
    if n < 2 or k <= 0:
        raise ValueError("bollinger requires n >= 2 and k > 0")
    c = series.close
    mid = _rolling(c, n, np.mean)
    sd = _rolling(c, n, np.std)  # population
    lower, upper = mid - k * sd, mid + k * sd
    width = upper - lower
    with np.errstate(divide="ignore", invalid="ignore"):
        bbb = np.where(mid == 0, np.nan, width / mid)
        bbp = np.where(width == 0, 0.5, (c - lower) / width)
    bbp[np.isnan(width)] = np.nan
    tag = f"{n}_{_fmt(float(k))}"
    return pd.DataFrame(
        {f"bbl_{tag}": lower, f"bbm_{tag}": mid, f"bbu_{tag}": upper, f"bbb_{tag}": bbb, f"bbp_{tag}": bbp},
        index=_index(series),
    )


def true_range(series: PriceSeries) -> np.ndarray:
    """TR per bar; position 0 has no previous close and is NaN."""
    h, l, c = series.high, series.low, series.close
    tr = np.full(len(series), np.nan)
    tr[1:] = np.maximum.reduce([h[1:] - l[1:], np.abs(h[1:] - c[:-1]), np.abs(l[1:] - c[:-1])])
    return tr


def atr(series: PriceSeries, n: int = 14) -> pd.Series:
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(series) < n + 1:
        raise ValueError(f"atr({n}) needs at least {n + 1} bars")
    tr = true_range(series)
    out = np.full(len(series), np.nan)
    out[n:] = sliding_window_view(tr[1:], n).mean(axis=1)
    return pd.Series(out, index=_index(series), name=f"atr_{n}")


def percent_vs_ma(values, baseline) -> np.ndarray | pd.Series:
    """``100 * (value - baseline) / baseline``; NaN where either side is undefined or baseline is 0."""
    v = np.asarray(values, dtype=float)
    b = np.asarray(baseline, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(b == 0, np.nan, 100.0 * (v - b) / b)
    if isinstance(values, pd.Series):
        return pd.Series(out, index=values.index)
    return out


_FUNCS = {
    "sma": sma,
    "ema": ema,
    "ichimoku": ichimoku,
    "adx": adx,
    "rsi": rsi,
    "macd": macd,
    "williams_r": williams_r,
    "kdj": kdj,
    "sqz": sqz,
    "bollinger": bollinger,
    "atr": atr,
}


def build_technical_frame(
    series: PriceSeries,
    specs=None,
    percent=DEFAULT_PERCENT,
    exclude=DEFAULT_EXCLUDE,
) -> pd.DataFrame:
    """Compute indicators, add percent-vs-MA columns and drop warm-up rows.

    Returns a frame with ``date``, ``close`` and one column per feature. The
    index holds each row's position in ``series`` so labels can be aligned.
    """
    specs = default_specs() if specs is None else list(specs)
    if not specs:
        raise ValueError("at least one indicator spec is required")
    cols = {"close": pd.Series(series.close, index=_index(series))}
    owner = {}
    for spec in specs:
        try:
            block = spec.compute(series)
        except ValueError as exc:
            raise DataError(f"{series.asset_id}: {spec.label}: {exc}") from exc
        for name in block.columns:
            cols[name] = block[name]
            owner[name] = spec
    for value, base in percent:
        if value not in cols or base not in cols:
            raise ValueError(f"percent transform references unknown column {value!r} or {base!r}")
        name = f"pct_{value}_{base}"
        cols[name] = percent_vs_ma(cols[value], cols[base])
        owner[name] = owner.get(base)
    for name in exclude:
        cols.pop(name, None)

    frame = pd.DataFrame(cols)
    frame.insert(0, "date", frame.index)
    frame.index = pd.RangeIndex(len(series))
    keep = frame.notna().all(axis=1)
    if not keep.any():
        undefined = frame.drop(columns=["date"]).notna().sum()
        worst = undefined.idxmin()
        spec = owner.get(worst)
        label = spec.label if spec is not None else worst
        raise DataError(f"{series.asset_id}: every row has an undefined feature; widest warm-up is {label}")
    return frame[keep]


def relative_to_close(frame: pd.DataFrame) -> pd.DataFrame:
    """Scale-free copy of a technical frame for sequence models.

    Price levels become ``level / close - 1``, price differences are divided
    by close and ``close`` itself is replaced by the one-bar log return (0 on
    the first row). Bounded oscillators pass through unchanged.
    """
    out = frame.copy()
    close = frame["close"].to_numpy(float)
    for name in frame.columns:
        if name.startswith(PRICE_LEVEL_PREFIXES):
            out[name] = frame[name].to_numpy(float) / close - 1.0
        elif name.startswith(PRICE_DIFF_PREFIXES):
            out[name] = frame[name].to_numpy(float) / close
    ret = np.zeros(len(close))
    ret[1:] = np.diff(np.log(close))
    out["close"] = ret
    return out
