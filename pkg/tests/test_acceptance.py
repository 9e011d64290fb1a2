"""Acceptance suite: one test per criterion, each recorded as a PASS/FAIL line in the run summary."""

import functools
import random
import time

import numpy as np
import pandas as pd
import pytest
import yaml

import oracles
from conftest import ACCEPTANCE, random_series
from hybridtrade.backtest import BacktestConfig, run_backtest
from hybridtrade.cli import main
from hybridtrade.hybrid import LSTM_COLUMNS, fundamental_frame, fuse, threshold_sweep, train_model
from hybridtrade.indicators import build_technical_frame, relative_to_close
from hybridtrade.labeling import relative_direction, target
from hybridtrade.lstm import LstmConfig, LstmNet, fit_lstm, make_windows, summarize
from hybridtrade.market_data import PriceSeries, preprocess_fundamentals
from hybridtrade.metrics import auc_score
from hybridtrade.neural import FeedForwardNet
from hybridtrade.synthetic import SyntheticConfig, generate_synthetic_market
from hybridtrade.trees import GbConfig, RfConfig, fit_gradient_boosting, fit_random_forest, predict_proba
from test_cli import PIPELINE, SMALL
from test_indicators import assert_matches, oracle_pairs


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                first = (str(exc).strip().splitlines() or [""])[0]
                ACCEPTANCE.append((number, title, False, f"{type(exc).__name__}: {first}"[:200]))
                raise
            ACCEPTANCE.append((number, title, True, detail or ""))

        return run

    return wrap


@criterion(1, "indicator oracle suite")
def test_indicators_match_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    columns = 0
    for k in range(100):
        s = random_series(rng, 300, asset_id=f"S{k}")
        for got, want in oracle_pairs(s):
            assert_matches(got, want, rtol=1e-9)
            columns += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 10, f"took {elapsed:.1f}s"
    return f"{columns} columns over 100 series match at rtol 1e-9 in {elapsed:.1f}s"


@criterion(2, "labeling oracle")
def test_labeling_matches_hand_evaluation():
    rng = random.Random(7)
    for _ in range(1000):
        length = rng.randint(2, 60)
        p = [rng.uniform(0.5, 200.0) for _ in range(length)]
        h = rng.randint(1, length - 1)
        n = rng.randint(0, length - h - 1)
        assert relative_direction(p, n, h) == oracles.direct(p, n, h)
        assert target(p, h).iloc[n] == oracles.literal_target(p, n, h)
    # worked examples: constant, flat with a jump to 12, window at 30
    const = [10.0] * 11
    assert relative_direction(const, 0, 10) == 0.0 and target(const, 10).iloc[0] == 0
    jump = [10.0] * 10 + [12.0]
    assert relative_direction(jump, 0, 10) == 2.0 and target(jump, 10).iloc[0] == 0
    high = [10.0] + [30.0] * 10
    assert relative_direction(high, 0, 10) == 30.0 and target(high, 10).iloc[0] == 1
    return "1000 random triples exact; three worked examples hold"


@criterion(3, "AUC identity")
def test_auc_identities():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 6, n).astype(float) if rng.random() < 0.5 else rng.random(n)
        worst = max(worst, abs(auc_score(s, y) - oracles.pairwise_auc(s, y)))
        assert abs(auc_score(s, y) + auc_score(-s, y) - 1.0) <= 1e-12
    assert worst <= 1e-12
    assert auc_score(np.full(10, 0.4), np.arange(10) % 2) == 0.5
    return f"max |trapezoid - pairwise| = {worst:.1e} over 1000 instances; ties 0.5; antisymmetric"


def _gradient_error(net, loss):
    analytic = loss()[1]
    numeric = oracles.finite_difference(lambda: loss()[0], net.params, eps=1e-5)
    return oracles.max_relative_error(analytic, numeric)


@criterion(4, "gradient checks")
def test_gradient_checks():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    lstm = LstmNet(n_in=3, hidden=2, layers=1, rng=rng)
    X = rng.normal(size=(6, 3, 3))
    y = np.array([0, 1, 1, 0, 1, 0], dtype=float)
    lstm_err = _gradient_error(lstm, lambda: lstm.loss_and_grads(X, y))
    ff = FeedForwardNet(2, (4,), rng)
    for b in ff.params[1::2]:
        b += rng.normal(0, 0.3, b.shape)  # keep rows off the ReLU kink at 0
    Xf = rng.normal(size=(8, 2))
    yf = rng.integers(0, 2, 8).astype(float)
    ff_err = _gradient_error(ff, lambda: ff.loss_and_grads(Xf, yf))
    elapsed = time.perf_counter() - start
    assert lstm_err < 1e-4 and ff_err < 1e-4
    assert elapsed < 60
    return f"max relative error LSTM {lstm_err:.1e}, feed-forward {ff_err:.1e} ({elapsed:.1f}s)"


LEARN = LstmConfig(layers=1, epochs=40, window=30)


def _single_asset_test_auc(strength, seed):
    market = generate_synthetic_market(
        SyntheticConfig(n_assets=1, n_bars=500, signal_strength=strength, signal_fraction=1.0), seed)
    series = market.prices[0]
    windows = make_windows(relative_to_close(build_technical_frame(series)), LEARN.window,
                           target(series, 10, rule="relative"))
    return summarize(fit_lstm(windows, LEARN), windows).test_auc


@criterion(5, "LSTM learnability and null")
def test_lstm_learnability():
    strong = _single_asset_test_auc(0.8, 7)
    null = [_single_asset_test_auc(0.0, seed) for seed in range(10)]
    mean = float(np.mean(null))
    inside = sum(0.4 <= a <= 0.6 for a in null)
    detail = (f"signal 0.8 seed 7: {strong:.3f}; noise seeds 0-9 mean {mean:.3f} "
              f"(per seed {', '.join(f'{a:.2f}' for a in null)}; {inside}/10 inside [0.40, 0.60])")
    assert strong >= 0.85, detail
    assert 0.40 <= mean <= 0.60, detail
    return detail


def _separable(seed, n=500):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 2))
    return pd.DataFrame({"a": x[:, 0], "b": x[:, 1], "target": (x[:, 0] + x[:, 1] > 0).astype(int)})


@criterion(6, "tree-ensemble sanity")
def test_tree_ensembles():
    cut = 350
    df = _separable(0)
    train, test = df.iloc[:cut], df.iloc[cut:]
    strong = {}
    for name, fit in (("rf", fit_random_forest), ("gb", fit_gradient_boosting)):
        model = fit(train)
        strong[name] = auc_score(predict_proba(model, test), test["target"])
        assert fit(train).to_json() == model.to_json()
    null = {"rf": [], "gb": []}
    for seed in range(10):
        shuffled = _separable(100 + seed)
        shuffled["target"] = np.random.default_rng(seed).permutation(shuffled["target"].to_numpy())
        tr, te = shuffled.iloc[:cut], shuffled.iloc[cut:]
        null["rf"].append(auc_score(predict_proba(fit_random_forest(tr, RfConfig(seed=seed)), te), te["target"]))
        null["gb"].append(auc_score(predict_proba(fit_gradient_boosting(tr, GbConfig(seed=seed)), te), te["target"]))
    means = {k: float(np.mean(v)) for k, v in null.items()}
    inside = {k: sum(0.45 <= a <= 0.55 for a in v) for k, v in null.items()}
    detail = (f"separable test AUC rf {strong['rf']:.3f}, gb {strong['gb']:.3f}; permuted mean over 10 seeds "
              f"rf {means['rf']:.3f} ({inside['rf']}/10 seeds inside), gb {means['gb']:.3f} "
              f"({inside['gb']}/10 inside); models bit-identical")
    assert min(strong.values()) >= 0.95, detail
    assert all(0.45 <= m <= 0.55 for m in means.values()), detail
    return detail


@pytest.fixture(scope="module")
def hybrid_market():
    """40 assets, 10 with a strong technical signal; per-asset LSTMs, fundamentals, fusion."""
    market = generate_synthetic_market(SyntheticConfig(n_assets=40, signal_fraction=0.25), 42)
    prices = {p.asset_id: p for p in market.prices}
    summaries = {}
    for i, series in enumerate(market.prices):
        windows = make_windows(relative_to_close(build_technical_frame(series)), LEARN.window,
                               target(series, 10, rule="relative"))
        cfg = LstmConfig(layers=1, epochs=40, window=30, seed=i)
        summaries[series.asset_id] = summarize(fit_lstm(windows, cfg), windows, asset_id=series.asset_id)
    base = fundamental_frame(preprocess_fundamentals(market.fundamentals), prices, 10)
    return base, fuse(base, summaries)


@criterion(7, "hybrid threshold trend")
def test_hybrid_trend(hybrid_market):
    start = time.perf_counter()
    _, fusion = hybrid_market
    sweep = threshold_sweep(fusion.frame)
    rows = [p.rows for p in sweep.points]
    low, high = sweep.at(0.3).test_auc, sweep.at(0.6).test_auc
    detail = f"test AUC {low:.3f} at 0.30 -> {high:.3f} at 0.60; rows {rows}"
    assert high > low, detail
    assert rows == sorted(rows, reverse=True), detail
    assert time.perf_counter() - start < 15 * 60
    return detail


@criterion(8, "fusion equivalence")
def test_fusion_equivalence(hybrid_market):
    base, fusion = hybrid_market
    keys = ["asset_id", "snapshot_date"]
    pure_frame = base.merge(fusion.frame[keys], on=keys)
    cfg = RfConfig(seed=11)
    pure = train_model(pure_frame, "rf", cfg)
    stripped = train_model(fusion.frame.drop(columns=list(LSTM_COLUMNS)), "rf", cfg)
    assert stripped.features == pure.features
    np.testing.assert_array_equal(stripped.predictions["prob"].to_numpy(), pure.predictions["prob"].to_numpy())
    return f"{len(pure_frame)} rows; predictions identical after dropping {', '.join(LSTM_COLUMNS)}"


@criterion(9, "backtest properties")
def test_backtest_properties():
    flat = [PriceSeries.from_closes(np.full(60, 25.0), f"F{i}") for i in range(8)]
    scores = pd.DataFrame({"date": pd.Timestamp(flat[0].dates[0]), "asset_id": [p.asset_id for p in flat],
                           "score": np.arange(8.0)})
    flat_result = run_backtest(scores, flat, config=BacktestConfig(top_k=3))
    assert flat_result.cumulative_return == 0.0

    rng = np.random.default_rng(9)
    prices = [random_series(rng, 150, f"A{i:02d}") for i in range(30)]
    dates = prices[0].dates
    rows = [(pd.Timestamp(dates[i]), p.asset_id, p.close[i + 5] / p.close[i])
            for i in range(0, len(dates) - 5, 5) for p in prices]
    perfect = pd.DataFrame(rows, columns=["date", "asset_id", "score"])
    res = run_backtest(perfect, prices, config=BacktestConfig(top_k=5))
    table = res.weekly_table()
    assert table["strategy_cum"].iloc[-1] >= table["equal_weight_cum"].iloc[-1]
    sums = res.holdings.groupby("date")["weight"].sum()
    assert ((sums - 1.0).abs() <= 1e-9).all()

    for t in res.holdings["date"].unique()[::4]:
        corrupted = perfect.copy()
        future = corrupted["date"] > t
        corrupted.loc[future, "score"] = -corrupted.loc[future, "score"]
        again = run_backtest(corrupted, prices, config=BacktestConfig(top_k=5))
        pd.testing.assert_frame_equal(again.holdings[again.holdings["date"] <= t],
                                      res.holdings[res.holdings["date"] <= t])
    return (f"flat cumulative 0; perfect ranking {table['strategy_cum'].iloc[-1]:.3f} vs equal weight "
            f"{table['equal_weight_cum'].iloc[-1]:.3f}; holdings unchanged under future corruption; weights sum to 1")


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    config = root / "small.yaml"
    config.write_text(yaml.safe_dump(SMALL))
    outs = []
    for name in ("a", "b"):
        out = root / name
        for command in PIPELINE:
            assert main([command, "--config", str(config), "--out", str(out), "--seed", "42"]) == 0, command
        outs.append(out)
    return outs


@criterion(10, "end-to-end determinism")
def test_end_to_end_determinism(two_runs):
    a, b = two_runs
    checked = [p.relative_to(a) for p in sorted(a.rglob("*")) if p.suffix in (".csv", ".json")]
    assert {p.relative_to(b) for p in b.rglob("*") if p.suffix in (".csv", ".json")} == set(checked)
    different = [str(p) for p in checked if (a / p).read_bytes() != (b / p).read_bytes()]
    assert not different, different
    manifests = sum(p.name == "manifest.json" for p in checked)
    return f"{len(checked)} CSV/JSON files including {manifests} manifests byte-identical across two seed-42 runs"


@criterion(11, "report schema")
def test_report_schema(two_runs):
    report = two_runs[0] / "report"
    t1 = pd.read_csv(report / "table1.csv")
    assert list(t1.columns) == ["metric", "train", "test", "validation"]
    assert t1["metric"].tolist() == ["auc", "acc", "recall", "specificity", "precision", "f1", "type1", "type2"]
    t2 = pd.read_csv(report / "table2.csv")
    assert t2["metric"].tolist() == ["train_auc", "test_auc", "train_acc", "test_acc", "diff_auc", "diff_acc"]
    t3 = pd.read_csv(report / "table3.csv")
    assert list(t3.columns) == ["model", "train_auc", "test_auc", "test_auc_sign", "ci_95"]
    assert t3["test_auc_sign"].isin(["yes", "no"]).all()
    return f"table1 8x3, table2 6 rows, table3 4 columns for {', '.join(t3['model'])}"
