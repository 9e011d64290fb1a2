"""Run configuration: YAML file merged over embedded defaults, plus seed derivation."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from .backtest import BacktestConfig
from .errors import ConfigError
from .hybrid import DEFAULT_THRESHOLDS
from .lstm import GRID, LstmConfig, SplitSpec
from .neural import NnConfig
from .synthetic import SyntheticConfig
from .trees import GbConfig, RfConfig

DEFAULTS = {
    "seed": 42,
    # null paths resolve inside the output directory (raw/ holds synth output)
    "paths": {"prices": None, "fundamentals": None, "benchmarks": None},
    "synth": {k: v for k, v in asdict(SyntheticConfig()).items() if k != "benchmarks"}
    | {"benchmarks": list(SyntheticConfig().benchmarks)},
    "features": {"indicators": None},  # null -> default indicator set
    "label": {"horizon": 10, "rule": "relative", "weights": [0.5, 0.5, 0.5]},
    "split": {"train": 0.6, "test": 0.3, "validation": 0.1},
    "lstm": {
        "search": True,
        "grid": {k: list(v) for k, v in GRID.items()},
        **{f.name: getattr(LstmConfig(), f.name) for f in fields(LstmConfig) if f.name != "seed"},
        "purge": None,  # null -> label.horizon
        "workers": 1,
    },
    "rf": {k: v for k, v in asdict(RfConfig()).items() if k != "seed"},
    "gb": {k: v for k, v in asdict(GbConfig()).items() if k != "seed"},
    "nn": {k: v for k, v in asdict(NnConfig()).items() if k != "seed"},
    "cv": {"folds": 5, "train_frac": 0.7},
    "bootstrap": {"resamples": 1000, "level": 0.95},
    "sweep": {"thresholds": list(DEFAULT_THRESHOLDS)},
    "backtest": asdict(BacktestConfig()),
}


def derive_seed(seed: int, name: str) -> int:
    """Per-component seed: first 4 bytes of sha256("<seed>:<name>")."""
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a mapping")
            out[key] = _merge(base[key], value, path + ".")
        elif key == "grid":
            if not isinstance(value, dict) or set(value) - set(GRID):
                raise ConfigError(f"config key {path!r} must map a subset of {sorted(GRID)} to lists")
            out[key] = {**base[key], **{k: list(v) for k, v in value.items()}}
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a mapping at top level")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def _build(cls, values, where):
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def synthetic_config(cfg) -> SyntheticConfig:
    values = dict(cfg["synth"])
    values["benchmarks"] = tuple(values["benchmarks"])
    out = _build(SyntheticConfig, values, "synth")
    out.validate()
    return out


def split_spec(cfg) -> SplitSpec:
    return _build(SplitSpec, cfg["split"], "split")


def lstm_config(cfg, seed: int) -> LstmConfig:
    values = {k: v for k, v in cfg["lstm"].items() if k not in ("search", "grid", "workers")}
    if values["purge"] is None:
        values["purge"] = cfg["label"]["horizon"]
    return _build(LstmConfig, {**values, "seed": seed}, "lstm")


def rf_config(cfg, seed: int) -> RfConfig:
    return _build(RfConfig, {**cfg["rf"], "seed": seed}, "rf")


def gb_config(cfg, seed: int) -> GbConfig:
    return _build(GbConfig, {**cfg["gb"], "seed": seed}, "gb")


def nn_config(cfg, seed: int) -> NnConfig:
    values = dict(cfg["nn"])
    if values.get("hidden") is not None:
        values["hidden"] = tuple(values["hidden"])
    return _build(NnConfig, {**values, "seed": seed}, "nn")


def backtest_config(cfg) -> BacktestConfig:
    return _build(BacktestConfig, cfg["backtest"], "backtest")


def validate(cfg):
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    label = cfg["label"]
    if not isinstance(label["horizon"], int) or label["horizon"] < 1:
        raise ConfigError("label.horizon must be an integer >= 1")
    if label["rule"] not in ("literal", "relative"):
        raise ConfigError("label.rule must be 'literal' or 'relative'")
    if len(label["weights"]) != 3:
        raise ConfigError("label.weights needs three numbers")
    if cfg["lstm"]["workers"] < 1:
        raise ConfigError("lstm.workers must be >= 1")
    th = cfg["sweep"]["thresholds"]
    if not th or any(b <= a for a, b in zip(th, th[1:])):
        raise ConfigError("sweep.thresholds must be a non-empty ascending list")
    synthetic_config(cfg)
    split_spec(cfg)
    lstm_config(cfg, 0)
    rf_config(cfg, 0)
    gb_config(cfg, 0)
    nn_config(cfg, 0)
    backtest_config(cfg)


def dump_defaults() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
