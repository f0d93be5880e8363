"""Quasi-Monte Carlo option pricing: point sets, path constructions, SDE schemes, multilevel estimators."""

__version__ = "0.1.0"
