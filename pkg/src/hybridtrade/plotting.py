"""Deterministic SVG figures (fixed hash salt, no timestamp metadata)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"svg.hashsalt": "hybridtrade", "svg.fonttype": "none", "figure.dpi": 100, "font.size": 9}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_backtest(result, path):
    table = result.weekly_table()
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        x = np.arange(len(table))
        for name in ["strategy", "equal_weight", *result.benchmarks]:
            ax.plot(x, 100.0 * table[f"{name}_cum"], label=name, lw=1.8 if name == "strategy" else 1.0)
        ticks = x[:: max(1, len(x) // 8)]
        ax.set_xticks(ticks)
        ax.set_xticklabels([str(table["start"].iloc[i])[:10] for i in ticks], rotation=30, ha="right")
        ax.set_ylabel("cumulative return (%)")
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        _save(fig, path)


def plot_sweep(sweep_frame, path):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        t = sweep_frame["threshold"]
        ax.plot(t, sweep_frame["train_auc"], marker="o", label="train AUC")
        ax.plot(t, sweep_frame["test_auc"], marker="s", label="test AUC")
        ax.set_xlabel("LSTM test AUC threshold")
        ax.set_ylabel("hybrid AUC")
        ax2 = ax.twinx()
        ax2.bar(t, sweep_frame["rows"], width=0.02, color="0.85", zorder=0)
        ax2.set_ylabel("rows retained")
        ax.set_zorder(ax2.get_zorder() + 1)
        ax.patch.set_visible(False)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def plot_importance(importance_frame, path, top: int = 20):
    head = importance_frame.head(top).iloc[::-1]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 0.25 * len(head) + 1))
        ax.barh(head["feature"], head["importance"], color="tab:blue")
        ax.set_xlabel("mean impurity decrease (normalised)")
        fig.tight_layout()
        _save(fig, path)


def plot_roc(curves: dict, path):
    """``curves`` maps a label to a RocCurve."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        for label, curve in curves.items():
            ax.plot(curve.fpr, curve.tpr, label=label)
        ax.plot([0, 1], [0, 1], color="0.6", lw=0.6, ls="--")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        _save(fig, path)
