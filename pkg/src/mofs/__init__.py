"""Multiobjective unsupervised feature selection on a synthetic taxonomy dataset."""

__version__ = "0.1.0"
