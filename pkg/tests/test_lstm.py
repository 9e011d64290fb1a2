import numpy as np
import pandas as pd
import pytest

from hybridtrade.errors import DataError
from hybridtrade.lstm import (
    LstmConfig,
    LstmModel,
    SplitSpec,
    TechnicalModelSummary,
    Windows,
    fit_lstm,
    greedy_search,
    make_windows,
    pond_prob,
    summarize,
)

TINY = LstmConfig(epochs=3, layers=1, window=5, hidden=4, seed=0)


def frame(n, f=2, seed=0):
    rng = np.random.default_rng(seed)
    dates = pd.date_range("2021-01-01", periods=n, freq="D")
    df = pd.DataFrame(rng.normal(size=(n, f)), columns=[f"f{i}" for i in range(f)])
    df.insert(0, "date", dates)
    return df


def labels(df, values):
    return pd.Series(np.asarray(values, dtype=float), index=df["date"])


def test_window_count_and_horizon_truncation():
    df = frame(40)
    w = make_windows(df, 30, labels(df, np.arange(40) % 2))
    assert len(w) == 11
    y = (np.arange(40) % 2).astype(float)
    y[-10:] = np.nan
    assert len(make_windows(df, 30, labels(df, y))) == 1
    with pytest.raises(DataError):
        make_windows(frame(20), 30, labels(frame(20), np.zeros(20)))


def test_window_contents_equal_frame_slices():
    df = frame(25, f=3)
    y = np.arange(25) % 2
    w = make_windows(df, 7, labels(df, y))
    X = w.tensor()
    values = df[["f0", "f1", "f2"]].to_numpy()
    for k, end in enumerate(w.end_rows):
        np.testing.assert_array_equal(X[k], values[end - 6:end + 1])
        assert w.y[k] == y[end]


def test_labels_align_by_date():
    df = frame(12)
    target = labels(df, np.arange(12) % 2).iloc[::-1]
    w = make_windows(df, 3, target)
    np.testing.assert_array_equal(w.y, (np.arange(2, 12) % 2).astype(float))


def test_split_is_chronological():
    df = frame(120)
    w = make_windows(df, 5, labels(df, np.arange(120) % 2))
    m = fit_lstm(w, TINY)
    s = summarize(m, w)
    p = s.predictions
    train, purged, test, val = (p.loc[p["split"] == k, "date"] for k in ("train", "purged", "test", "validation"))
    assert train.max() < purged.min() and purged.max() < test.min() and test.max() < val.min()
    # 116 windows: round(69.6) train of which the last 10 are purged, round(104.4) ends the test split
    assert (len(train), len(purged), len(test), len(val)) == (60, 10, 34, 12)


def test_normalisation_uses_training_rows_only():
    df = frame(120)
    df.loc[80:, "f0"] += 50.0  # a later regime the training rows never see
    w = make_windows(df, 5, labels(df, np.arange(120) % 2))
    m = fit_lstm(w, TINY)
    train_end, _ = SplitSpec().bounds(len(w))
    last_train_row = w.end_rows[train_end - TINY.purge - 1]
    visible = df[["f0", "f1"]].to_numpy()[: last_train_row + 1]
    np.testing.assert_allclose(m.mean, visible.mean(axis=0))
    np.testing.assert_allclose(m.sd, visible.std(axis=0))
    assert abs(m.mean[0] - df["f0"].mean()) > 1.0


def test_purged_labels_do_not_reach_the_test_period():
    h = 10
    df = frame(150)
    w = make_windows(df, 5, labels(df, np.arange(150) % 2))
    train_end, _ = SplitSpec().bounds(len(w))
    last_fitted_row = w.end_rows[train_end - TINY.purge - 1]
    first_test_row = w.end_rows[train_end]
    # a label at row r depends on rows r+1..r+h; none of them may lie past the first test window
    assert last_fitted_row + h <= first_test_row
    with pytest.raises(DataError, match="purging"):
        fit_lstm(make_windows(frame(18), 5, labels(frame(18), np.arange(18) % 2)), TINY)


def test_fit_is_deterministic_and_serialisable():
    df = frame(80)
    w = make_windows(df, 5, labels(df, np.arange(80) % 2))
    a, b = fit_lstm(w, TINY), fit_lstm(w, TINY)
    assert a.to_json() == b.to_json()
    back = LstmModel.from_json(a.to_json())
    np.testing.assert_array_equal(back.predict_proba(w), a.predict_proba(w))
    sa, sb = summarize(a, w), summarize(b, w)
    assert sa.row() == sb.row()
    assert sa.prob_min <= sa.prob_max
    assert sa.diff_auc == sa.train_auc - sa.test_auc


def test_empty_split_rejected():
    df = frame(8)
    w = make_windows(df, 5, labels(df, [0, 1, 0, 1, 0, 1, 0, 1]))
    with pytest.raises(DataError, match="empty"):
        fit_lstm(w, TINY)


class Oracle:
    """Stands in for a fitted model and returns the labels themselves."""

    config = TINY

    def predict_proba(self, windows, rows=None):
        return windows.y.copy()


def test_perfect_classifier_summary():
    df = frame(60)
    w = make_windows(df, 5, labels(df, np.arange(60) % 2))
    s = summarize(Oracle(), w)
    assert s.test_auc == 1.0 and s.diff_auc == s.train_auc - 1.0
    assert (s.prob_min, s.prob_max) == (0.0, 1.0)


def test_single_class_split_flagged():
    df = frame(60)
    y = np.zeros(60)
    y[:10] = [0, 1] * 5
    w = make_windows(df, 5, labels(df, y))
    s = summarize(Oracle(), w)
    assert np.isnan(s.test_auc)
    assert "test split has a single class" in s.flags


def summary(lo, hi):
    return TechnicalModelSummary("A", 0.6, 0.55, 0.05, 0.6, 0.55, lo, hi, pd.DataFrame())


def test_pond_prob():
    s = summary(0.2, 0.8)
    assert pond_prob(0.2, s) == 0.0
    assert pond_prob(0.8, s) == 1.0
    assert abs(pond_prob(0.5, s) - 0.5) < 1e-12
    assert pond_prob(0.95, s) == 1.0 and pond_prob(0.05, s) == 0.0
    grid = np.linspace(0, 1, 101)
    assert np.all(np.diff(pond_prob(grid, s)) >= 0)
    with pytest.raises(DataError, match="degenerate test distribution"):
        pond_prob(0.5, summary(0.4, 0.4))


def test_greedy_singleton_grid():
    df = frame(100)
    w = make_windows(df, 5, labels(df, np.arange(100) % 2))
    out = greedy_search(w, {"epochs": (3,), "layers": (1,), "window": (5,)}, base=LstmConfig(hidden=4))
    assert (out.config.epochs, out.config.layers, out.config.window) == (3, 1, 5)
    assert len(out.trials) == 1


def test_greedy_order_and_determinism():
    df = frame(100)
    w = make_windows(df, 6, labels(df, np.arange(100) % 2))
    grid = {"epochs": (2, 3), "layers": (1, 2), "window": (4, 6)}
    base = LstmConfig(hidden=3, window=6, epochs=2, layers=1)
    a = greedy_search(w, grid, base=base)
    b = greedy_search(w, grid, base=base)
    assert a.trials == b.trials and a.config == b.config
    keys = [t[:3] for t in a.trials]
    assert keys[:2] == [(2, 1, 6), (3, 1, 6)]
    assert len(set(keys)) == len(keys)


def test_greedy_picks_dominant_window():
    # the label is the sign of a 30-row sum, so only the longest window sees all of it
    rng = np.random.default_rng(0)
    x = rng.normal(size=700)
    total = pd.Series(x).rolling(30).sum().to_numpy()
    y = np.where(np.isnan(total), np.nan, (total > 0).astype(float))
    w = Windows(x[:, None], y, np.arange(700), 30, ["x"])
    out = greedy_search(w, {"epochs": (40,), "layers": (1,), "window": (10, 20, 30)},
                        base=LstmConfig(hidden=8, learning_rate=0.01))
    assert out.config.window == 30
    by_window = {t[2]: t[3] for t in out.trials}
    assert by_window[30] > max(by_window[10], by_window[20])
