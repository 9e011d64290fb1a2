import numpy as np
import pandas as pd
import pytest

from conftest import random_series
from hybridtrade.backtest import BacktestConfig, cumulative, run_backtest, select, write_report
from hybridtrade.errors import ConfigError, DataError
from hybridtrade.market_data import BenchmarkSeries, PriceSeries


def constant_scores(prices, date=None):
    date = date or pd.Timestamp(prices[0].dates[0])
    return pd.DataFrame({"date": date, "asset_id": [p.asset_id for p in prices],
                         "score": np.linspace(1, 0, len(prices))})


def test_flat_market_returns_zero():
    prices = [PriceSeries.from_closes(np.full(40, 50.0), f"A{i}") for i in range(5)]
    bench = BenchmarkSeries("IDX", prices[0].dates, np.full(40, 1000.0))
    res = run_backtest(constant_scores(prices), prices, [bench], BacktestConfig(top_k=3))
    assert (res.periods["strategy"] == 0.0).all()
    assert res.cumulative_return == 0.0
    assert (res.weekly_table()["IDX_cum"] == 0.0).all()


def test_single_asset_period_return():
    p = PriceSeries.from_closes([100, 101, 99, 104, 107, 110], "A")
    res = run_backtest(constant_scores([p]), [p], config=BacktestConfig(top_k=1, period=5))
    assert len(res.periods) == 1
    assert abs(res.periods["strategy"].iloc[0] - 0.10) < 1e-15


def perfect_scores(prices, period):
    """Score each asset at each rebalance by its realised next-period return."""
    rows = []
    dates = prices[0].dates
    for i in range(0, len(dates) - period, period):
        for p in prices:
            rows.append((pd.Timestamp(dates[i]), p.asset_id, p.close[i + period] / p.close[i] - 1))
    return pd.DataFrame(rows, columns=["date", "asset_id", "score"])


@pytest.mark.parametrize("seed", range(5))
def test_perfect_ranking_beats_equal_weight(seed):
    rng = np.random.default_rng(seed)
    prices = [random_series(rng, 120, f"A{i:02d}") for i in range(20)]
    res = run_backtest(perfect_scores(prices, 5), prices, config=BacktestConfig(top_k=5))
    table = res.weekly_table()
    assert table["strategy_cum"].iloc[-1] >= table["equal_weight_cum"].iloc[-1]
    assert (table["strategy"] >= table["equal_weight"] - 1e-15).all()


def test_weights_sum_to_one_and_holdings_count():
    rng = np.random.default_rng(1)
    prices = [random_series(rng, 60, f"A{i}") for i in range(4)]
    res = run_backtest(perfect_scores(prices, 5), prices, config=BacktestConfig(top_k=3))
    per_date = res.holdings.groupby("date")
    assert (per_date["weight"].sum().sub(1).abs() <= 1e-9).all()
    assert (per_date.size() == 3).all()
    assert (res.holdings["weight"] >= 0).all()
    few = run_backtest(perfect_scores(prices, 5), prices, config=BacktestConfig(top_k=10))
    assert (few.holdings.groupby("date").size() == 4).all()
    assert any("only 4 scorable" in f for f in few.flags)


def test_no_look_ahead():
    rng = np.random.default_rng(2)
    prices = [random_series(rng, 80, f"A{i}") for i in range(6)]
    scores = perfect_scores(prices, 5)
    base = run_backtest(scores, prices, config=BacktestConfig(top_k=2))
    for t in base.holdings["date"].unique()[1:]:
        corrupted = scores.copy()
        future = corrupted["date"] > t
        corrupted.loc[future, "score"] = rng.normal(size=int(future.sum())) * 100
        res = run_backtest(corrupted, prices, config=BacktestConfig(top_k=2))
        past = base.holdings["date"] <= t
        pd.testing.assert_frame_equal(res.holdings[res.holdings["date"] <= t], base.holdings[past])


def test_cumulative_chaining():
    rng = np.random.default_rng(3)
    prices = [random_series(rng, 100, f"A{i}") for i in range(5)]
    res = run_backtest(perfect_scores(prices, 5), prices, config=BacktestConfig(top_k=2))
    table = res.weekly_table()
    for name in ("strategy", "equal_weight"):
        chained = []
        acc = 1.0
        for r in table[name]:
            acc *= 1.0 + r
            chained.append(acc - 1.0)
        np.testing.assert_allclose(table[f"{name}_cum"], chained, rtol=0, atol=1e-12)


def test_missing_price_counts_zero_and_is_flagged():
    a = PriceSeries.from_closes(np.linspace(10, 12, 12), "A")
    b = PriceSeries.from_closes(np.linspace(10, 11, 4), "B")
    scores = pd.DataFrame({"date": pd.Timestamp(a.dates[0]), "asset_id": ["B", "A"], "score": [1.0, 0.5]})
    res = run_backtest(scores, [a, b], config=BacktestConfig(top_k=1))
    assert res.periods["strategy"].iloc[0] == 0.0
    assert any("no price for B" in f for f in res.flags)


def test_turnover_costs():
    p = PriceSeries.from_closes(np.full(11, 10.0), "A")
    res = run_backtest(constant_scores([p]), [p], config=BacktestConfig(top_k=1, costs_bps=10))
    np.testing.assert_allclose(res.periods["strategy"], [-0.001, 0.0])


def test_select_ties_by_asset_id():
    latest = pd.Series({"B": 0.5, "A": 0.5, "C": 0.9, "D": float("nan")})
    assert select(latest, 3) == [("C", 0.9), ("A", 0.5), ("B", 0.5)]


def test_config_and_window_errors():
    with pytest.raises(ConfigError):
        BacktestConfig(top_k=0)
    with pytest.raises(ConfigError):
        BacktestConfig(score_source="vibes")
    p = PriceSeries.from_closes(np.full(4, 10.0), "A")
    with pytest.raises(DataError, match="empty"):
        run_backtest(constant_scores([p]), [p], config=BacktestConfig(top_k=1))


def test_report_files_are_reproducible(tmp_path):
    rng = np.random.default_rng(4)
    prices = [random_series(rng, 20, f"A{i}") for i in range(3)]
    bench = [BenchmarkSeries("IDX", prices[0].dates, prices[0].close * 3)]
    res = run_backtest(perfect_scores(prices, 5), prices, bench, BacktestConfig(top_k=2))
    first = write_report(res, tmp_path / "a")
    second = write_report(res, tmp_path / "b")
    for x, y in zip(first, second):
        assert x.read_bytes() == y.read_bytes()
    table = pd.read_csv(first[0])
    assert len(table) == 3
    assert list(table.columns) == ["start", "end", "strategy", "strategy_cum", "equal_weight",
                                   "equal_weight_cum", "IDX", "IDX_cum"]
    assert first[1].read_text().startswith("<?xml")
    np.testing.assert_allclose(cumulative([0.1, -0.1]), [0.1, -0.01])
