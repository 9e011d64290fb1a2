import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybridtrade.market_data import PriceSeries

settings.register_profile("repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def random_series(rng: np.random.Generator, n: int, asset_id: str = "X", start: str = "2020-01-01") -> PriceSeries:
    """Valid OHLCV bars from a geometric random walk."""
    close = 100.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(n)))
    opn = close * np.exp(0.01 * rng.standard_normal(n))
    high = np.maximum(opn, close) * (1.0 + 0.01 * rng.random(n))
    low = np.minimum(opn, close) * (1.0 - 0.01 * rng.random(n))
    volume = rng.integers(1_000, 100_000, n).astype(float)
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n)
    return PriceSeries(asset_id, dates, opn, high, low, close, volume)


def bars(close, high=None, low=None, start="2020-01-01", asset_id="X") -> PriceSeries:
    close = np.asarray(close, dtype=float)
    high = close if high is None else np.asarray(high, dtype=float)
    low = close if low is None else np.asarray(low, dtype=float)
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + len(close))
    return PriceSeries(asset_id, dates, close.copy(), high, low, close, np.ones(len(close)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (number, title, passed, detail) entry per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}: {detail}")
