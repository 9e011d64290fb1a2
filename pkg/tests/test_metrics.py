import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from hybridtrade.errors import DataError
from hybridtrade.metrics import (
    CvReport,
    auc_score,
    bootstrap_ci,
    confusion_report,
    diff_metrics,
    is_significant,
    roc_auc,
    rolling_cv,
    rolling_cv_splits,
    significance_vs_chance,
)


def labelled(rng, n, ties=False):
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, 5, n).astype(float) if ties else rng.random(n)
    return s, y


def test_perfect_and_all_tied():
    y = np.array([0, 1, 1, 0, 1])
    assert auc_score(y.astype(float), y) == 1.0
    assert auc_score(np.full(5, 0.3), y) == 0.5


def test_single_class_rejected():
    with pytest.raises(DataError):
        roc_auc([0.1, 0.2], [1, 1])


def test_pairwise_oracle_fifty_points():
    s, y = labelled(np.random.default_rng(50), 50)
    assert abs(auc_score(s, y) - oracles.pairwise_auc(s, y)) <= 1e-12


def test_pairwise_oracle_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(200):
        s, y = labelled(rng, int(rng.integers(2, 40)), ties=True)
        assert abs(auc_score(s, y) - oracles.pairwise_auc(s, y)) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(2, 60), st.booleans())
def test_roc_shape_and_antisymmetry(seed, n, ties):
    s, y = labelled(np.random.default_rng(seed), n, ties)
    curve, auc = roc_auc(s, y)
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert abs(auc + auc_score(-s, y) - 1.0) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_monotone_transform_invariance(seed, n):
    s, y = labelled(np.random.default_rng(seed), n)
    assert auc_score(np.exp(3 * s) + 7, y) == auc_score(s, y)


def test_confusion_examples():
    y = np.array([1, 1, 0, 0, 1])
    r = confusion_report(y.astype(float), y)
    assert (r.acc, r.recall, r.specificity, r.precision, r.f1, r.type1, r.type2) == (1, 1, 1, 1, 1, 0, 0)
    r = confusion_report(np.ones(5), y)
    assert r.recall == 1 and r.specificity == 0 and r.type1 == 1


def test_hand_confusion_matrix():
    # TP=3, FP=2, TN=4, FN=1
    y = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 1])
    s = np.array([0.9, 0.8, 0.7, 0.6, 0.55, 0.2, 0.1, 0.3, 0.4, 0.2])
    r = confusion_report(s, y)
    assert r.recall == 0.75 and r.precision == 0.6
    assert abs(r.f1 - 2 / 3) < 1e-12
    assert r.acc == 0.7 and r.n_pos == 4 and r.n_neg == 6


def test_undefined_precision_is_nan_and_flagged():
    r = confusion_report(np.zeros(4), np.array([0, 1, 0, 1]))
    assert math.isnan(r.precision) and math.isnan(r.f1)
    assert "precision undefined" in r.flags


@given(st.integers(0, 2**32 - 1), st.integers(2, 50), st.floats(0, 1))
def test_confusion_identities(seed, n, threshold):
    s, y = labelled(np.random.default_rng(seed), n)
    r = confusion_report(s, y, threshold)
    assert r.type2 == 1 - r.recall and r.type1 == 1 - r.specificity
    for v in (r.acc, r.recall, r.specificity):
        assert 0 <= v <= 1


def test_bootstrap_perfect_and_deterministic():
    y = np.array([0] * 20 + [1] * 20)
    assert bootstrap_ci(y.astype(float), y, B=200, seed=3) == (1.0, 1.0)
    s, y = labelled(np.random.default_rng(2), 100)
    assert bootstrap_ci(s, y, seed=9) == bootstrap_ci(s, y, seed=9)


def test_bootstrap_matches_loop_resampling():
    s, y = labelled(np.random.default_rng(4), 30)
    lo, hi = bootstrap_ci(s, y, B=300, seed=5)
    auc = auc_score(s, y)
    assert lo <= auc <= hi


def test_bootstrap_coverage_on_noise():
    rng = np.random.default_rng(11)
    hits = 0
    for k in range(50):
        y = rng.integers(0, 2, 2000)
        s = rng.random(2000)
        lo, hi = bootstrap_ci(s, y, B=300, seed=k)
        hits += lo <= 0.5 <= hi
    assert hits >= 45


def test_significance():
    assert is_significant((0.550, 0.581))
    assert not is_significant((0.49, 0.6))
    rng = np.random.default_rng(8)
    y = rng.integers(0, 2, 500)
    s = y + rng.normal(0, 1.2, 500)
    assert 0.7 < auc_score(s, y) < 0.9
    assert significance_vs_chance(s, y, B=500, seed=1)[0]
    false_alarms = 0
    for k in range(40):
        y = rng.integers(0, 2, 500)
        false_alarms += significance_vs_chance(rng.random(500), y, B=300, seed=k)[0]
    assert false_alarms <= 4


def test_diff_metrics():
    r = confusion_report([0.2, 0.8], [0, 1])
    assert diff_metrics(r, r) == (0.0, 0.0)

    class Report:
        def __init__(self, auc, acc):
            self.auc, self.acc = auc, acc

    d_auc, d_acc = diff_metrics(Report(0.631, 0.578), Report(0.527, 0.524))
    assert abs(d_auc - 0.104) < 1e-12
    assert abs(d_acc - 0.053) <= 0.001


def test_cv_report_on_five_fold_aucs():
    cv = CvReport.from_aucs([0.5769, 0.5352, 0.5238, 0.5265, 0.5962])
    assert round(cv.mean, 4) == 0.5517
    assert round(cv.sd, 4) == 0.0293


def test_rolling_cv_constant_model_and_chronology():
    rng = np.random.default_rng(0)
    X = rng.random((200, 3))
    y = rng.integers(0, 2, 200)
    seen = []

    def fit(Xt, yt):
        seen.append(len(yt))
        return lambda Xs: np.full(len(Xs), 0.5)

    cv = rolling_cv(X, y, fit)
    assert cv.aucs == (0.5,) * 5 and cv.sd == 0.0
    ends = [b[2] for b in cv.boundaries]
    assert all(b > a for a, b in zip(ends, ends[1:]))
    for start, cut, end in cv.boundaries:
        assert start < cut < end and cut == round(end * 0.7)
    assert seen == [b[1] for b in cv.boundaries]


def test_rolling_cv_needs_rows():
    with pytest.raises(DataError):
        rolling_cv_splits(3, folds=5)
