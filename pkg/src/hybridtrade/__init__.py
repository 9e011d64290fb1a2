"""Hybrid technical/fundamental stock-direction models and a weekly top-k backtest."""

__version__ = "0.1.0"
