"""Interpretable clustering with optimal multiway-split decision trees."""

__version__ = "0.1.0"
