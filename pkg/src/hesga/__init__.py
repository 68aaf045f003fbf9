"""Genetic hyperparameter search with a hierarchical fast/full evaluation strategy."""

__version__ = "0.1.0"
