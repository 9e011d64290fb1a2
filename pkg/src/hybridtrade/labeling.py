"""Relative-direction target over a fixed business-day horizon.

The relative direction at decision bar ``n`` with horizon ``h`` is

    (max - P(n)) * w_max + (min - P(n)) * w_min + (P(n+h) - P(n)) * w_end

with max/min taken over closes ``n+1 .. n+h`` and all weights 1/2 by default.

Two decision rules are available:

``"literal"``
    target is 1 iff ``direction - P(n) > 0``. Because ``direction`` is already
    a price difference, this only fires when the horizon's prices average
    roughly two thirds above ``P(n)``.
``"relative"``
    target is 1 iff ``direction > 0``, i.e. the weighted excursions are net
    positive. The pipeline uses this rule by default.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .market_data import PriceSeries

HALF_WEIGHTS = (0.5, 0.5, 0.5)
RULES = ("literal", "relative")


def _closes(series) -> np.ndarray:
    return series.close if isinstance(series, PriceSeries) else np.asarray(series, dtype=float)


def relative_direction(series, n: int, h: int = 10, *, weights=HALF_WEIGHTS, include_current=False) -> float:
    p = _closes(series)
    if h < 1:
        raise ValueError("horizon must be >= 1")
    if n < 0 or n + h > len(p) - 1:
        raise ValueError(f"horizon overruns series end: n={n}, h={h}, last index={len(p) - 1}")
    window = p[n:n + h + 1] if include_current else p[n + 1:n + h + 1]
    w_max, w_min, w_end = weights
    base = p[n]
    return w_max * (window.max() - base) + w_min * (window.min() - base) + w_end * (p[n + h] - base)


def direction_column(series, h: int = 10, *, weights=HALF_WEIGHTS, include_current=False) -> np.ndarray:
    """Vectorised :func:`relative_direction` for every position (NaN in the last ``h``)."""
    p = _closes(series)
    out = np.full(len(p), np.nan)
    m = len(p) - h
    if m <= 0:
        return out
    if include_current:
        win = sliding_window_view(p, h + 1)[:m]
    else:
        win = sliding_window_view(p[1:], h)[:m]
    base = p[:m]
    w_max, w_min, w_end = weights
    out[:m] = w_max * (win.max(axis=1) - base) + w_min * (win.min(axis=1) - base) + w_end * (p[h:] - base)
    return out


def target(series, h: int = 10, *, rule: str = "literal", weights=HALF_WEIGHTS, include_current=False) -> pd.Series:
    """Binary target per position, NaN for the last ``h`` positions.

    Named ``target_h{h}``; indexed by bar date when given a PriceSeries.
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    p = _closes(series)
    if len(p) <= h:
        raise ValueError(f"series length {len(p)} must exceed horizon {h}")
    direct = direction_column(p, h, weights=weights, include_current=include_current)
    score = direct - p if rule == "literal" else direct
    vals = np.where(np.isnan(score), np.nan, (score > 0).astype(float))
    index = pd.DatetimeIndex(series.dates, name="date") if isinstance(series, PriceSeries) else None
    return pd.Series(vals, index=index, name=f"target_h{h}")
