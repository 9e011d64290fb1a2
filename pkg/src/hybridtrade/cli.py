"""Command-line pipeline: synth | ingest | features | label | train-lstm | train-fundamental |
train-hybrid | sweep | backtest | report.

Every command writes into its own directory under ``--out`` together with a
``manifest.json`` holding the resolved config, the seed, the package version
and sha256 digests of the files read and written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from multiprocessing import Pool
from pathlib import Path

import pandas as pd

from . import __version__
from . import config as cfgmod
from .backtest import SCORE_SOURCES, run_backtest, write_report
from .errors import DataError, HybridTradeError, MissingArtifactError
from .hybrid import (
    FAMILIES,
    chronological,
    feature_columns,
    fundamental_frame,
    fuse,
    lstm_importance,
    threshold_sweep,
    train_hybrid,
    train_model,
)
from .indicators import IndicatorSpec, build_technical_frame, relative_to_close
from .labeling import target
from .lstm import SUMMARY_COLUMNS, TechnicalModelSummary, fit_lstm, greedy_search, make_windows, summarize
from .market_data import (
    ingest_benchmark,
    ingest_fundamentals,
    ingest_prices,
    write_benchmark_csv,
    write_fundamentals_csv,
    write_prices_csv,
)
from .metrics import METRIC_NAMES, CvReport, bootstrap_ci, is_significant, roc_curve, rolling_cv_splits, safe_auc
from .plotting import plot_importance, plot_roc, plot_sweep
from .synthetic import generate_synthetic_market
from .trees import fit_random_forest, predict_proba

log = logging.getLogger("hybridtrade")

STAGES = {
    "synth": "raw",
    "ingest": "data",
    "features": "features",
    "label": "labels",
    "train-lstm": "lstm",
    "train-fundamental": "fundamental",
    "train-hybrid": "hybrid",
    "sweep": "sweep",
    "backtest": "backtest",
    "report": "report",
}


# --------------------------------------------------------------------------- helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _rel(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(path)


def _write_csv(frame: pd.DataFrame, path: Path):
    frame = frame.copy()
    for col in frame.columns:
        if pd.api.types.is_datetime64_any_dtype(frame[col]):
            frame[col] = frame[col].dt.strftime("%Y-%m-%d")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def _read_csv(path: Path, producer: str, dates=()) -> pd.DataFrame:
    if not path.exists():
        raise MissingArtifactError(path, producer)
    frame = pd.read_csv(path, float_precision="round_trip")
    for col in dates:
        frame[col] = pd.to_datetime(frame[col])
    return frame


class Stage:
    """Tracks the files a command reads and writes, then emits its manifest."""

    def __init__(self, command: str, out: Path, cfg: dict):
        self.command, self.out, self.cfg = command, out, cfg
        self.dir = out / STAGES[command]
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs, self.outputs = set(), set()

    def need(self, rel: str, producer: str) -> Path:
        path = self.out / rel
        if not path.exists():
            raise MissingArtifactError(path, producer)
        self.inputs.add(path)
        return path

    def read(self, rel: str, producer: str, dates=()) -> pd.DataFrame:
        return _read_csv(self.need(rel, producer), producer, dates)

    def listing(self, rel_dir: str, producer: str) -> list[Path]:
        d = self.out / rel_dir
        files = sorted(d.glob("*.csv")) if d.is_dir() else []
        if not files:
            raise MissingArtifactError(d, producer)
        self.inputs.update(files)
        return files

    def path(self, rel: str) -> Path:
        p = self.dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.add(p)
        return p

    def csv(self, frame: pd.DataFrame, rel: str):
        _write_csv(frame, self.path(rel))

    def text(self, body: str, rel: str):
        self.path(rel).write_text(body)

    def finish(self):
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.cfg["seed"],
            "config": self.cfg,
            "inputs": {_rel(p, self.out): _sha256(p) for p in sorted(self.inputs)},
            "outputs": {_rel(p, self.out): _sha256(p) for p in sorted(self.outputs)},
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        log.info("%s: wrote %d file(s) to %s", self.command, len(self.outputs), self.dir)


def _input_path(stage: Stage, key: str, default_rel: str) -> Path:
    given = stage.cfg["paths"][key]
    return Path(given) if given is not None else stage.out / default_rel


def _load_prices(stage: Stage) -> dict:
    out = {}
    for path in stage.listing("data/prices", "ingest"):
        out[path.stem] = ingest_prices(path, path.stem)
    return out


def _load_benchmarks(stage: Stage) -> list:
    d = stage.out / "data" / "benchmarks"
    files = sorted(d.glob("*.csv")) if d.is_dir() else []
    stage.inputs.update(files)
    return [ingest_benchmark(p, p.stem) for p in files]


def _summaries(stage: Stage) -> dict:
    """Rebuild technical summaries from the train-lstm CSVs."""
    table = stage.read("lstm/summaries.csv", "train-lstm")
    extra = stage.read("lstm/accuracy.csv", "train-lstm")
    preds = stage.read("lstm/predictions.csv", "train-lstm", dates=("date",))
    acc = extra.set_index("asset_id")
    groups = dict(tuple(preds.groupby("asset_id", sort=True)))
    out = {}
    for row in table.itertuples(index=False):
        p = groups.get(row.asset_id)
        if p is None:
            continue
        out[row.asset_id] = TechnicalModelSummary(
            asset_id=row.asset_id, train_auc=row.train_auc, test_auc=row.test_auc, diff_auc=row.diff_auc,
            train_acc=float(acc.loc[row.asset_id, "train_acc"]), test_acc=float(acc.loc[row.asset_id, "test_acc"]),
            prob_min=row.prob_min, prob_max=row.prob_max,
            predictions=p[["date", "split", "prob", "target"]].reset_index(drop=True),
        )
    return out


def _seed(cfg, name):
    return cfgmod.derive_seed(cfg["seed"], name)


# --------------------------------------------------------------------------- commands


def cmd_synth(stage: Stage, args):
    market = generate_synthetic_market(cfgmod.synthetic_config(stage.cfg), _seed(stage.cfg, "synth"))
    for series in market.prices:
        write_prices_csv(series, stage.path(f"prices/{series.asset_id}.csv"))
    for bench in market.benchmarks:
        write_benchmark_csv(bench, stage.path(f"benchmarks/{bench.index_id}.csv"))
    write_fundamentals_csv(market.fundamentals, stage.path("fundamentals.csv"))
    stage.csv(pd.DataFrame(sorted(market.signal.items()), columns=["asset_id", "signal_strength"]), "signal.csv")


def cmd_ingest(stage: Stage, args):
    prices_dir = _input_path(stage, "prices", "raw/prices")
    fund_path = _input_path(stage, "fundamentals", "raw/fundamentals.csv")
    bench_dir = _input_path(stage, "benchmarks", "raw/benchmarks")
    files = sorted(prices_dir.glob("*.csv")) if prices_dir.is_dir() else []
    if not files:
        raise MissingArtifactError(prices_dir, "synth (or point paths.prices at a price directory)")
    if not fund_path.exists():
        raise MissingArtifactError(fund_path, "synth (or point paths.fundamentals at a CSV)")
    stage.inputs.update(files)
    stage.inputs.add(fund_path)
    log_rows = []
    for path in files:
        series = ingest_prices(path, path.stem)
        write_prices_csv(series, stage.path(f"prices/{path.stem}.csv"))
        log_rows.append((path.stem, len(series), series.dropped))
    snapshots = ingest_fundamentals(fund_path)
    write_fundamentals_csv(snapshots, stage.path("fundamentals.csv"))
    bench_files = sorted(bench_dir.glob("*.csv")) if bench_dir.is_dir() else []
    stage.inputs.update(bench_files)
    for path in bench_files:
        write_benchmark_csv(ingest_benchmark(path, path.stem), stage.path(f"benchmarks/{path.stem}.csv"))
    stage.csv(pd.DataFrame(log_rows, columns=["asset_id", "rows", "dropped_rows"]), "ingest_log.csv")


def _specs(cfg):
    raw = cfg["features"]["indicators"]
    if raw is None:
        return None
    try:
        return [IndicatorSpec(item["kind"], dict(item.get("params") or {})) for item in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise cfgmod.ConfigError(f"features.indicators: {exc}") from exc


def cmd_features(stage: Stage, args):
    specs = _specs(stage.cfg)
    excluded = []
    for asset, series in _load_prices(stage).items():
        try:
            frame = build_technical_frame(series, specs)
        except DataError as exc:
            excluded.append((asset, str(exc)))
            log.warning("features: %s excluded: %s", asset, exc)
            continue
        stage.csv(frame, f"{asset}.csv")
    if len(excluded) == len(stage.inputs):
        raise DataError("features: every asset was excluded")
    stage.csv(pd.DataFrame(excluded, columns=["asset_id", "reason"]), "excluded.csv")


def cmd_label(stage: Stage, args):
    lab = stage.cfg["label"]
    for asset, series in _load_prices(stage).items():
        tg = target(series, lab["horizon"], rule=lab["rule"], weights=tuple(lab["weights"]))
        frame = pd.DataFrame({"date": tg.index, tg.name: tg.to_numpy()})
        stage.csv(frame, f"{asset}.csv")


def _fit_asset(job):
    """Worker: train one asset's technical model. Returns (asset, outcome dict | error string)."""
    asset, frame, labels, cfg, seed = job
    base = cfgmod.lstm_config(cfg, seed)
    split = cfgmod.split_spec(cfg)
    try:
        windows = make_windows(relative_to_close(frame), base.window, labels)
        if cfg["lstm"]["search"]:
            grid = {k: tuple(v) for k, v in cfg["lstm"]["grid"].items()}
            outcome = greedy_search(windows, grid, split, base, asset)
            chosen, summary, trials, model = outcome
        else:
            model = fit_lstm(windows, base, split)
            summary = summarize(model, windows, split, asset)
            chosen, trials = base, [(base.epochs, base.layers, base.window, summary.test_auc)]
    except HybridTradeError as exc:
        return asset, str(exc)
    return asset, {"config": chosen, "summary": summary, "trials": trials, "model": model.to_json()}


def cmd_train_lstm(stage: Stage, args):
    feature_files = stage.listing("features", "features")
    jobs = []
    for path in feature_files:
        if path.name == "excluded.csv":
            continue
        asset = path.stem
        frame = _read_csv(path, "features", dates=("date",))
        lab = stage.read(f"labels/{asset}.csv", "label", dates=("date",))
        labels = pd.Series(lab.iloc[:, 1].to_numpy(float), index=pd.DatetimeIndex(lab["date"]))
        jobs.append((asset, frame, labels, stage.cfg, _seed(stage.cfg, f"lstm:{asset}")))
    workers = stage.cfg["lstm"]["workers"]
    if workers > 1 and len(jobs) > 1:
        with Pool(min(workers, len(jobs))) as pool:
            results = pool.map(_fit_asset, jobs)
    else:
        results = [_fit_asset(j) for j in jobs]

    rows, acc, preds, trials, excluded, chosen = [], [], [], [], [], []
    for asset, res in sorted(results, key=lambda r: r[0]):
        if isinstance(res, str):
            excluded.append((asset, res))
            log.warning("train-lstm: %s excluded: %s", asset, res)
            continue
        s, c = res["summary"], res["config"]
        rows.append(s.row())
        acc.append({"asset_id": asset, "train_acc": s.train_acc, "test_acc": s.test_acc,
                    "flags": "; ".join(s.flags)})
        p = s.predictions.copy()
        p.insert(0, "asset_id", asset)
        preds.append(p)
        trials += [(asset, *t) for t in res["trials"]]
        chosen.append((asset, c.epochs, c.layers, c.window, c.hidden, c.learning_rate, c.seed))
        stage.text(res["model"] + "\n", f"models/{asset}.json")
    if not rows:
        raise DataError("train-lstm: every asset was excluded")
    stage.csv(pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS)), "summaries.csv")
    stage.csv(pd.DataFrame(acc), "accuracy.csv")
    stage.csv(pd.concat(preds, ignore_index=True), "predictions.csv")
    stage.csv(pd.DataFrame(trials, columns=["asset_id", "epochs", "layers", "window", "test_auc"]), "trials.csv")
    stage.csv(pd.DataFrame(chosen, columns=["asset_id", "epochs", "layers", "window", "hidden",
                                            "learning_rate", "seed"]), "configs.csv")
    stage.csv(pd.DataFrame(excluded, columns=["asset_id", "reason"]), "excluded.csv")


def _family_config(cfg, family):
    seed = _seed(cfg, f"fundamental:{family}")
    return {"rf": cfgmod.rf_config, "gb": cfgmod.gb_config, "nn": cfgmod.nn_config}[family](cfg, seed)


def _significance(result, cfg, name):
    test = result.predictions[result.predictions["split"] == "test"]
    ci = _ci_or_nan(test["prob"], test["target"], cfg, name)
    return {"model": name, "train_auc": result.reports["train"].auc, "test_auc": result.reports["test"].auc,
            "test_auc_sign": "yes" if is_significant(ci) else "no", "ci_low": ci[0], "ci_high": ci[1]}


def _metrics_rows(result, name):
    frame = result.metrics_frame()
    frame.insert(0, "model", name)
    return frame


def cmd_train_fundamental(stage: Stage, args):
    lab = stage.cfg["label"]
    prices = _load_prices(stage)
    snapshots = ingest_fundamentals(stage.need("data/fundamentals.csv", "ingest"))
    frame = fundamental_frame(snapshots, prices, lab["horizon"], rule=lab["rule"], weights=tuple(lab["weights"]))
    stage.csv(frame, "frame.csv")
    split = cfgmod.split_spec(stage.cfg)
    metrics, sig, preds = [], [], []
    for family in FAMILIES:
        res = train_model(frame, family, _family_config(stage.cfg, family), split=split)
        metrics.append(_metrics_rows(res, family))
        sig.append(_significance(res, stage.cfg, family))
        p = res.predictions.copy()
        p.insert(0, "model", family)
        preds.append(p)
        if res.importance:
            imp = res.importance_frame()
            stage.csv(imp, f"importance_{family}.csv")
            if family == "rf":
                plot_importance(imp, stage.path("importance_rf.svg"))
        if family != "nn":
            stage.text(res.model.to_json() + "\n", f"models/{family}.json")
    stage.csv(pd.concat(metrics, ignore_index=True), "metrics.csv")
    stage.csv(pd.DataFrame(sig), "significance.csv")
    stage.csv(pd.concat(preds, ignore_index=True), "predictions.csv")

    # expanding-window CV of the forest on the chronological frame
    ordered = chronological(frame)
    X = ordered[feature_columns(ordered)].to_numpy(float)
    y = ordered["target"].to_numpy(float)
    rf = _family_config(stage.cfg, "rf")
    cv = stage.cfg["cv"]
    aucs, flags, bounds = [], [], rolling_cv_splits(len(y), cv["folds"], cv["train_frac"])
    for k, (start, cut, end) in enumerate(bounds):
        try:
            model = fit_random_forest((X[start:cut], y[start:cut]), rf, features=feature_columns(ordered))
            auc = safe_auc(predict_proba(model, X[cut:end]), y[cut:end])
        except DataError as exc:
            auc = math.nan
            flags.append(f"fold {k}: {exc}")
        aucs.append(auc)
    report = CvReport.from_aucs(aucs, bounds, flags)
    cv_rows = [{"fold": k, "train_start": b[0], "train_end": b[1], "test_end": b[2], "auc": a}
               for k, (b, a) in enumerate(zip(report.boundaries, report.aucs))]
    cv_rows += [{"fold": "mean", "auc": report.mean}, {"fold": "sd", "auc": report.sd}]
    cv_frame = pd.DataFrame(cv_rows).astype({"train_start": "Int64", "train_end": "Int64", "test_end": "Int64"})
    stage.csv(cv_frame, "cv.csv")
    stage.csv(pd.DataFrame({"flag": list(report.flags)}), "cv_flags.csv")


def cmd_train_hybrid(stage: Stage, args):
    summaries = _summaries(stage)
    frame = stage.read("fundamental/frame.csv", "train-fundamental", dates=("snapshot_date",))
    fusion = fuse(frame, summaries)
    stage.csv(fusion.frame, "fused.csv")
    stage.csv(pd.DataFrame(sorted(fusion.excluded.items()), columns=["asset_id", "reason"]), "excluded.csv")
    rf = cfgmod.rf_config(stage.cfg, _seed(stage.cfg, "hybrid:rf"))
    res = train_hybrid(fusion.frame, rf, cfgmod.split_spec(stage.cfg))
    stage.csv(_metrics_rows(res, "hybrid"), "metrics.csv")
    stage.csv(pd.DataFrame([_significance(res, stage.cfg, "hybrid")]), "significance.csv")
    imp = res.importance_frame()
    stage.csv(imp, "importance.csv")
    stage.csv(pd.DataFrame([{"feature": "lstm_prediction (sum of fused columns)",
                             "importance": lstm_importance(res.importance)}]), "importance_lstm_sum.csv")
    stage.csv(res.predictions, "predictions.csv")
    stage.text(res.model.to_json() + "\n", "model.json")
    plot_importance(imp, stage.path("importance.svg"))


def cmd_sweep(stage: Stage, args):
    frame = stage.read("hybrid/fused.csv", "train-hybrid", dates=("snapshot_date",))
    rf = cfgmod.rf_config(stage.cfg, _seed(stage.cfg, "hybrid:rf"))
    result = threshold_sweep(frame, rf, stage.cfg["sweep"]["thresholds"], cfgmod.split_spec(stage.cfg))
    table = result.to_frame()
    stage.csv(table, "sweep.csv")
    flags = [(p.threshold, f) for p in result.points for f in p.flags]
    stage.csv(pd.DataFrame(flags, columns=["threshold", "flag"]), "flags.csv")
    plot_sweep(table, stage.path("sweep.svg"))


def _lstm_auc_scores(stage: Stage) -> pd.DataFrame:
    """Per-asset LSTM test AUC, dated once every test label has been realised."""
    table = stage.read("lstm/summaries.csv", "train-lstm")
    preds = stage.read("lstm/predictions.csv", "train-lstm", dates=("date",))
    h = stage.cfg["label"]["horizon"]
    rows = []
    for asset, p in preds.groupby("asset_id", sort=True):
        p = p.sort_values("date", kind="mergesort").reset_index(drop=True)
        last_test = p.index[p["split"] == "test"].max()
        if last_test + h >= len(p):
            continue
        auc = table.loc[table["asset_id"] == asset, "test_auc"]
        if len(auc):
            rows.append((p.loc[last_test + h, "date"], asset, float(auc.iloc[0])))
    return pd.DataFrame(rows, columns=["date", "asset_id", "score"])


def cmd_backtest(stage: Stage, args):
    bt = cfgmod.backtest_config(stage.cfg)
    if bt.score_source == "hybrid":
        preds = stage.read("hybrid/predictions.csv", "train-hybrid", dates=("snapshot_date",))
        preds = preds[preds["split"] != "train"]
        scores = pd.DataFrame({"date": preds["snapshot_date"], "asset_id": preds["asset_id"], "score": preds["prob"]})
    else:
        scores = _lstm_auc_scores(stage)
    if scores.empty:
        raise DataError("backtest: no out-of-sample scores")
    prices = _load_prices(stage)
    result = run_backtest(scores, list(prices.values()), _load_benchmarks(stage), bt)
    for path in write_report(result, stage.dir):
        stage.outputs.add(path)
    stage.csv(result.holdings, "holdings.csv")
    stage.csv(pd.DataFrame({"flag": result.flags}), "flags.csv")


def _panel(metrics: pd.DataFrame, model: str) -> pd.DataFrame:
    rows = metrics[metrics["model"] == model].set_index("split")
    if rows.empty:
        raise DataError(f"no metrics for model {model!r}")
    return pd.DataFrame({"metric": list(METRIC_NAMES),
                         **{s: [float(rows.loc[s, m]) for m in METRIC_NAMES] for s in ("train", "test", "validation")}})


def _ci_or_nan(scores, labels, cfg, name):
    boot = cfg["bootstrap"]
    try:
        return bootstrap_ci(scores, labels, boot["resamples"], boot["level"], _seed(cfg, f"bootstrap:{name}"))
    except DataError:
        return math.nan, math.nan


def _technical_significance(test_preds: pd.DataFrame, summ: pd.DataFrame, cfg):
    """Pooled interval over every asset's test predictions, plus one interval per asset."""
    rows = []
    for asset, p in test_preds.groupby("asset_id", sort=True):
        lo, hi = _ci_or_nan(p["prob"], p["target"], cfg, f"technical:{asset}")
        rows.append({"asset_id": asset, "test_auc": safe_auc(p["prob"], p["target"]), "ci_low": lo, "ci_high": hi})
    lo, hi = _ci_or_nan(test_preds["prob"], test_preds["target"], cfg, "technical")
    pooled = {"model": "technical", "train_auc": summ["train_auc"].mean(), "test_auc": summ["test_auc"].mean(),
              "test_auc_sign": "yes" if is_significant((lo, hi)) else "no", "ci_low": lo, "ci_high": hi}
    return pooled, pd.DataFrame(rows, columns=["asset_id", "test_auc", "ci_low", "ci_high"])


def cmd_report(stage: Stage, args):
    fmetrics = stage.read("fundamental/metrics.csv", "train-fundamental")
    hmetrics = stage.read("hybrid/metrics.csv", "train-hybrid")
    stage.csv(_panel(fmetrics, "rf"), "table1.csv")
    stage.csv(_panel(hmetrics, "hybrid"), "table1_hybrid.csv")

    summ = stage.read("lstm/summaries.csv", "train-lstm")
    acc = stage.read("lstm/accuracy.csv", "train-lstm")
    t2 = [("train_auc", summ["train_auc"].mean()), ("test_auc", summ["test_auc"].mean()),
          ("train_acc", acc["train_acc"].mean()), ("test_acc", acc["test_acc"].mean()),
          ("diff_auc", (summ["train_auc"] - summ["test_auc"]).mean()),
          ("diff_acc", (acc["train_acc"] - acc["test_acc"]).mean())]
    stage.csv(pd.DataFrame(t2, columns=["metric", "mean"]), "table2.csv")

    preds = stage.read("lstm/predictions.csv", "train-lstm")
    tech, per_asset = _technical_significance(preds[preds["split"] == "test"], summ, stage.cfg)
    stage.csv(per_asset, "technical_ci.csv")
    sig = pd.concat([pd.DataFrame([tech]),
                     stage.read("fundamental/significance.csv", "train-fundamental"),
                     stage.read("hybrid/significance.csv", "train-hybrid")], ignore_index=True)
    t3 = pd.DataFrame({
        "model": sig["model"].map(lambda m: m if m in ("hybrid", "technical") else f"fundamental_{m}"),
        "train_auc": sig["train_auc"], "test_auc": sig["test_auc"], "test_auc_sign": sig["test_auc_sign"],
        "ci_95": [f"[{lo:.3f}, {hi:.3f}]" for lo, hi in zip(sig["ci_low"], sig["ci_high"])],
    })
    stage.csv(t3, "table3.csv")

    curves = {}
    for label, rel, producer, model in (("fundamental RF", "fundamental/predictions.csv", "train-fundamental", "rf"),
                                        ("hybrid", "hybrid/predictions.csv", "train-hybrid", None)):
        p = stage.read(rel, producer)
        if model is not None:
            p = p[p["model"] == model]
        p = p[p["split"] == "test"]
        try:
            curves[label] = roc_curve(p["prob"], p["target"])
        except DataError:
            log.warning("report: %s test split has a single class; ROC skipped", label)
    if curves:
        plot_roc(curves, stage.path("roc_test.svg"))


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "label": cmd_label,
    "train-lstm": cmd_train_lstm,
    "train-fundamental": cmd_train_fundamental,
    "train-hybrid": cmd_train_hybrid,
    "sweep": cmd_sweep,
    "backtest": cmd_backtest,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config merged over the built-in defaults")
    common.add_argument("--out", type=Path, default=Path("run"), help="output directory (default: run)")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hybridtrade", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--print-config", action="store_true", help="print the default config and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "train-lstm":
            p.add_argument("--workers", type=int, help="parallel worker processes")
            p.add_argument("--search", action=argparse.BooleanOptionalAction, default=None,
                           help="greedy grid search (default from config)")
        if name == "backtest":
            p.add_argument("--top-k", type=int)
            p.add_argument("--period", type=int)
            p.add_argument("--score-source", choices=SCORE_SOURCES)
            p.add_argument("--costs-bps", type=float)
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    lstm = {k: v for k, v in (("workers", getattr(args, "workers", None)), ("search", getattr(args, "search", None)))
            if v is not None}
    if lstm:
        out["lstm"] = lstm
    bt = {k: getattr(args, a, None) for k, a in (("top_k", "top_k"), ("period", "period"),
                                                  ("score_source", "score_source"), ("costs_bps", "costs_bps"))}
    bt = {k: v for k, v in bt.items() if v is not None}
    if bt:
        out["backtest"] = bt
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        sys.stdout.write(cfgmod.dump_defaults())
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load_config(args.config, _overrides(args))
        stage = Stage(args.command, args.out, cfg)
        COMMANDS[args.command](stage, args)
        stage.finish()
    except HybridTradeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
